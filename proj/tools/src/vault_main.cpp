// vault serve --config <path>
#include <csignal>

#include "common.hpp"
#include "vaultor/vault_daemon.hpp"

using namespace vaultor;
using nlohmann::json;

namespace {

int serve(const std::filesystem::path& config_path, const std::filesystem::path& ready_file, bool resume) {
  auto cfg = load_vault_config(config_path);
  auto device = load_or_create_device(cfg.fuse_file);
  auto vchs_file = cfg.vault.storage_dir / "vchs_onion";
  if (cfg.vault.vchs_onion.empty() && std::filesystem::exists(vchs_file))
    cfg.vault.vchs_onion = tools::read_text(vchs_file);

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  auto network = std::make_shared<transport::Network>(cfg.transport);
  VaultDaemon vault(cfg.vault, network, device);
  auto vchs = vault.advertise_vchs();
  tools::write_text(vchs_file, vchs);
  std::size_t resumed = resume ? vault.resume_services() : 0;

  json info{{"vchs_onion", vchs},
            {"attestation_key", hex_encode(vault.attestation_public_key())},
            {"storage_dir", vault.config().storage_dir.string()},
            {"resumed_services", resumed}};
  std::cout << info.dump() << std::endl;
  if (!ready_file.empty()) tools::write_text(ready_file, info.dump() + "\n");

  int sig = 0;
  sigwait(&signals, &sig);
  std::cerr << "vault: shutting down\n";
  vault.shutdown();
  network->shutdown();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"VaulTor vault daemon"};
  app.require_subcommand(1);
  auto* serve_cmd = app.add_subcommand("serve", "Advertise the contact service and host submitted programs");
  std::filesystem::path config, ready;
  bool no_resume = false;
  serve_cmd->add_option("--config", config, "JSON or key=value config file")->required()->check(CLI::ExistingFile);
  serve_cmd->add_option("--ready-file", ready, "Written with the contact details once listening");
  serve_cmd->add_flag("--no-resume", no_resume, "Do not relaunch persisted services");
  CLI11_PARSE(app, argc, argv);
  return tools::guarded([&] { return serve(config, ready, !no_resume); });
}
