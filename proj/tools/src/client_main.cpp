// client fetch | import-ad
#include "common.hpp"
#include "vaultor/client_fetch.hpp"

using namespace vaultor;
using nlohmann::json;
namespace fs = std::filesystem;

int main(int argc, char** argv) {
  CLI::App app{"VaulTor client"};
  app.require_subcommand(1);

  auto* get = app.add_subcommand("fetch", "Fetch a page from a pinned onion service");
  std::string url, path;
  fs::path pin_file, out_file;
  int count = 1;
  tools::TransportFlags transport;
  get->add_option("--url", url, "Service onion")->required();
  get->add_option("--path", path, "Page path")->required();
  get->add_option("--pin-file", pin_file, "Pins JSON")->required()->check(CLI::ExistingFile);
  get->add_option("--profile", transport.latency, "Latency profile JSON");
  get->add_option("--count", count, "Number of fetches")->check(CLI::PositiveNumber);
  get->add_option("--body-out", out_file, "Write the last body here");
  transport.add(*get);
  get->get_option("--latency")->excludes("--profile");

  auto* imp = app.add_subcommand("import-ad", "Pin the certificate hash from an advertisement");
  fs::path ad_file, imp_pins;
  bool replace = false;
  imp->add_option("--ad", ad_file, "Advertisement JSON")->required()->check(CLI::ExistingFile);
  imp->add_option("--pin-file", imp_pins)->required();
  imp->add_flag("--replace", replace, "Overwrite an existing different pin");

  CLI11_PARSE(app, argc, argv);

  return tools::guarded([&]() -> int {
    if (*imp) {
      PinStore pins = fs::exists(imp_pins) ? PinStore::load(imp_pins) : PinStore{};
      pins.import_advertisement(Advertisement::from_json(tools::read_text(ad_file)), replace);
      pins.save(imp_pins);
      return 0;
    }
    auto pins = PinStore::load(pin_file);
    auto network = transport.network();
    auto circuit = transport.circuit();
    int failures = 0;
    for (int i = 0; i < count; ++i) {
      try {
        auto r = fetch(*network, url, path, pins, circuit);
        std::cout << r.to_json() << std::endl;
        if (!out_file.empty() && i + 1 == count) tools::write_file(out_file, r.body);
      } catch (const Error& e) {
        ++failures;
        std::cout << json{{"status", "Failure"}, {"error", to_string(e.code())}, {"detail", e.what()}}.dump()
                  << std::endl;
      }
    }
    return failures == 0 ? 0 : 2;
  });
}
