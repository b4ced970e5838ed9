// bench run --plan <json> --out <dir>
#include "common.hpp"
#include "vaultor/bench_harness.hpp"

using namespace vaultor;

int main(int argc, char** argv) {
  CLI::App app{"VaulTor vanilla-vs-enclave benchmark"};
  app.require_subcommand(1);
  auto* run = app.add_subcommand("run", "Run the benchmark grid");
  std::filesystem::path plan_file, out;
  bool quiet = false;
  run->add_option("--plan", plan_file, "Plan JSON; missing keys keep defaults")->check(CLI::ExistingFile);
  run->add_option("--out", out, "Report directory")->required();
  run->add_flag("-q,--quiet", quiet, "No progress output");
  CLI11_PARSE(app, argc, argv);

  return tools::guarded([&] {
    BenchPlan plan = plan_file.empty() ? BenchPlan{} : BenchPlan::from_json(tools::read_text(plan_file));
    plan.validate();
    BenchProgress progress;
    if (!quiet) progress = [](const std::string& s) { std::cerr << s << "\n"; };
    auto report = run_pair(plan, progress);
    report.write(out);
    std::cout << report.summary_table();
    return 0;
  });
}
