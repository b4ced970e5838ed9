// provider build-hp | bootstrap | update | export-keys | import-keys
#include "common.hpp"
#include "vaultor/provider_client.hpp"

using namespace vaultor;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Common {
  fs::path profile;
  fs::path uptime_log;
  tools::TransportFlags transport;

  void add(CLI::App& cmd) {
    cmd.add_option("--profile", profile, "Provider profile JSON")->required();
    cmd.add_option("--uptime-log", uptime_log, "Appends one JSON line per provider session");
    transport.add(cmd);
  }

  ProviderProfile load() const { return ProviderProfile::from_json(tools::read_text(profile)); }

  /// Saves the profile and appends intervals logged since `before`.
  void save(const ProviderProfile& p, std::size_t before) const {
    tools::write_text(profile, p.to_json() + "\n");
    if (uptime_log.empty()) return;
    std::ofstream out(uptime_log, std::ios::app);
    for (std::size_t i = before; i < p.uptime_log.size(); ++i) out << p.uptime_log[i].to_json() << "\n";
  }
};

Bytes read_secret(const fs::path& file) {
  auto s = tools::read_text(file);
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
  return to_bytes(s);
}

std::map<std::string, Bytes> read_content(const fs::path& dir) {
  std::map<std::string, Bytes> content;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    content["/" + fs::relative(e.path(), dir).generic_string()] = tools::read_file(e.path());
  }
  return content;
}

void print_receipt(const UpdateReceipt& r) {
  std::cout << json{{"applied", r.applied}, {"unapplied", r.unapplied}}.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"VaulTor provider tooling"};
  app.require_subcommand(1);

  auto* build = app.add_subcommand("build-hp", "Build the host program and print its measurement");
  fs::path secret_file, hp_out, provider_key_out;
  HpBuildOptions build_opts;
  build->add_option("--secret-file", secret_file, "Provider authentication secret")->required();
  build->add_option("--out", hp_out, "Program image output")->required();
  build->add_option("--bind-port", build_opts.bind_port);
  build->add_option("--max-staleness", build_opts.max_staleness_seconds, "Seconds");
  build->add_option("--backup-interval", build_opts.backup_interval_seconds, "Seconds");
  build->add_option("--provider-key-out", provider_key_out, "Generate a signing key and authenticate with it");

  auto* boot = app.add_subcommand("bootstrap", "Submit, attest and upload initial content");
  Common boot_common;
  std::string vchs, attestation_key;
  fs::path hp_file, content_dir, boot_secret, boot_provider_key, ad_out;
  boot_common.add(*boot);
  boot->add_option("--vault", vchs, "Vault contact service onion")->required();
  boot->add_option("--attestation-key", attestation_key, "Vault attestation public key (hex)")->required();
  boot->add_option("--hp", hp_file, "Program image from build-hp")->required()->check(CLI::ExistingFile);
  boot->add_option("--secret-file", boot_secret)->required()->check(CLI::ExistingFile);
  boot->add_option("--content", content_dir, "Directory uploaded as the site")->required()->check(CLI::ExistingDirectory);
  boot->add_option("--provider-key", boot_provider_key, "Seed file written by build-hp --provider-key-out");
  boot->add_option("--ad-out", ad_out, "Also write the advertisement here");

  auto* upd = app.add_subcommand("update", "Apply content changes in one attested session");
  Common upd_common;
  std::vector<std::string> adds, removes;
  upd_common.add(*upd);
  upd->add_option("--add", adds, "<path>=<file>");
  upd->add_option("--remove", removes, "<path>");

  auto* exp = app.add_subcommand("export-keys", "Export the service identity for another vault");
  Common exp_common;
  fs::path keys_out;
  exp_common.add(*exp);
  exp->add_option("--out", keys_out)->required();

  auto* imp = app.add_subcommand("import-keys", "Install an exported identity on this profile's vault");
  Common imp_common;
  fs::path keys_in;
  imp_common.add(*imp);
  imp->add_option("--keys", keys_in)->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  return tools::guarded([&]() -> int {
    if (*build) {
      if (!provider_key_out.empty()) {
        auto key = crypto::SigningKey::generate();
        build_opts.provider_public_key = key.public_key();
        tools::write_text(provider_key_out, hex_encode(key.seed()) + "\n");
        fs::permissions(provider_key_out, fs::perms::owner_read | fs::perms::owner_write);
      }
      auto hp = build_hp(read_secret(secret_file), build_opts);
      tools::write_file(hp_out, hp.bytes);
      std::cout << json{{"measurement", hp.measurement.hex()}, {"bytes", hp.bytes.size()}, {"path", hp_out.string()}}
                       .dump()
                << std::endl;
      return 0;
    }
    if (*boot) {
      Bytes hp = tools::read_file(hp_file);
      ProviderProfile p;
      p.auth_secret = read_secret(boot_secret);
      p.expected_measurement = tee::measure(hp);
      p.vault_vchs = vchs;
      p.vault_attestation_key = to_fixed<crypto::kPublicKeySize>(hex_decode(attestation_key));
      if (!boot_provider_key.empty()) p.provider_key_seed = hex_decode(tools::read_text(boot_provider_key).substr(0, 64));
      auto network = boot_common.transport.network();
      ProviderClient client(*network, p, boot_common.transport.circuit());
      auto ad = client.bootstrap(hp, read_content(content_dir));
      boot_common.save(client.profile(), 0);
      if (!ad_out.empty()) tools::write_text(ad_out, ad.to_json() + "\n");
      std::cout << ad.to_json() << std::endl;
      return 0;
    }
    if (*upd) {
      std::vector<ContentChange> changes;
      for (const auto& a : adds) {
        auto eq = a.find('=');
        if (eq == std::string::npos || eq == 0) fail(ErrorCode::kConfigInvalid, "--add expects <path>=<file>: " + a);
        changes.push_back(ContentChange::upload(a.substr(0, eq), tools::read_file(a.substr(eq + 1))));
      }
      for (const auto& r : removes) changes.push_back(ContentChange::remove(r));
      auto network = upd_common.transport.network();
      auto profile = upd_common.load();
      auto before = profile.uptime_log.size();
      ProviderClient client(*network, profile, upd_common.transport.circuit());
      auto receipt = client.update_content(changes);
      upd_common.save(client.profile(), before);
      print_receipt(receipt);
      if (receipt.partial_failure()) {
        std::cerr << "error: PartialFailure: " << receipt.unapplied.size() << " change(s) not applied\n";
        return 3;
      }
      return 0;
    }
    if (*exp) {
      auto network = exp_common.transport.network();
      auto profile = exp_common.load();
      auto before = profile.uptime_log.size();
      ProviderClient client(*network, profile, exp_common.transport.circuit());
      auto keys = client.export_keys();
      exp_common.save(client.profile(), before);
      tools::write_file(keys_out, keys.serialize());
      fs::permissions(keys_out, fs::perms::owner_read | fs::perms::owner_write);
      return 0;
    }
    auto network = imp_common.transport.network();
    auto profile = imp_common.load();
    auto before = profile.uptime_log.size();
    ProviderClient client(*network, profile, imp_common.transport.circuit());
    client.import_keys(KeyMaterial::parse(tools::read_file(keys_in)));
    imp_common.save(client.profile(), before);
    std::cout << client.advertisement().to_json() << std::endl;
    return 0;
  });
}
