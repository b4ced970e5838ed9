#include "vaultor/bench_harness.hpp"

#include <chrono>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <map>
#include <random>
#include <sstream>

#include "vaultor/client_fetch.hpp"
#include "vaultor/error.hpp"
#include "vaultor/vault_daemon.hpp"

namespace vaultor {

using nlohmann::json;
using transport::CircuitProfile;
using transport::RelayMode;

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

Bytes make_page(std::int64_t size, std::uint64_t seed) {
  static constexpr char kAlphabet[] = "abcdefghijklmnopqrstuvwxyz ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789\n";
  std::mt19937_64 rng(mix(seed, static_cast<std::uint64_t>(size)));
  Bytes page(static_cast<std::size_t>(size));
  for (auto& b : page) b = static_cast<std::uint8_t>(kAlphabet[rng() % (sizeof(kAlphabet) - 1)]);
  return page;
}

std::string page_path(std::int64_t size) { return "/page-" + std::to_string(size) + ".html"; }

json summary_json(const SampleSummary& s) {
  return {{"n", s.n},           {"mean", s.mean},       {"stddev", s.stddev},
          {"ci_low", s.ci_low}, {"ci_high", s.ci_high}, {"ci_half_width", s.ci_half_width},
          {"level", s.level}};
}

bool overlap(const SampleSummary& a, const SampleSummary& b) { return a.ci_low <= b.ci_high && b.ci_low <= a.ci_high; }

std::optional<double> overhead(double vanilla, double enclave) {
  if (!(vanilla > 0)) return std::nullopt;
  return (enclave - vanilla) / vanilla * 100.0;
}

std::string fmt(double v, int precision = 2) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

constexpr const char* kChannelPolicy =
    "RandomRelays: new circuit and new channel for every load; "
    "FixedRelays: one channel per fixed circuit reused for all its loads; "
    "Local: one channel reused for all loads";

}  // namespace

std::string_view to_string(Variant variant) { return variant == Variant::kVanilla ? "vanilla" : "enclave"; }

void BenchPlan::validate() const {
  if (page_sizes_bytes.empty()) fail(ErrorCode::kConfigInvalid, "page_sizes_bytes must not be empty");
  for (auto s : page_sizes_bytes) {
    if (s <= 0) fail(ErrorCode::kConfigInvalid, "page sizes must be positive");
  }
  if (loads_per_page < 2) fail(ErrorCode::kConfigInvalid, "loads_per_page must be at least 2");
  if (fixed_circuits < 1) fail(ErrorCode::kConfigInvalid, "fixed_circuits must be at least 1");
  if (modes.empty()) fail(ErrorCode::kConfigInvalid, "modes must not be empty");
  if (updates < 0) fail(ErrorCode::kConfigInvalid, "updates must not be negative");
  CircuitProfile(latency, 0);
}

std::string BenchPlan::to_json() const {
  json modes_j = json::array();
  for (auto m : modes) modes_j.push_back(std::string(transport::to_string(m)));
  return json{{"page_sizes_bytes", page_sizes_bytes},
              {"loads_per_page", loads_per_page},
              {"fixed_circuits", fixed_circuits},
              {"modes", modes_j},
              {"seed", seed},
              {"latency",
               {{"hops", latency.hops},
                {"min_ms", latency.min_ms},
                {"max_ms", latency.max_ms},
                {"jitter_ms", latency.jitter_ms}}},
              {"updates", updates},
              {"virtual_time", virtual_time}}
      .dump();
}

BenchPlan BenchPlan::from_json(const std::string& text) {
  auto j = json::parse(text, nullptr, false);
  if (!j.is_object()) fail(ErrorCode::kConfigInvalid, "bench plan is not a JSON object");
  BenchPlan p;
  try {
    if (j.contains("page_sizes_bytes")) p.page_sizes_bytes = j["page_sizes_bytes"].get<std::vector<std::int64_t>>();
    p.loads_per_page = j.value("loads_per_page", p.loads_per_page);
    p.fixed_circuits = j.value("fixed_circuits", p.fixed_circuits);
    if (j.contains("modes")) {
      p.modes.clear();
      for (const auto& m : j["modes"]) p.modes.push_back(transport::parse_relay_mode(m.get<std::string>()));
    }
    p.seed = j.value("seed", p.seed);
    if (j.contains("latency")) {
      const auto& l = j["latency"];
      p.latency.hops = l.value("hops", p.latency.hops);
      p.latency.min_ms = l.value("min_ms", p.latency.min_ms);
      p.latency.max_ms = l.value("max_ms", p.latency.max_ms);
      p.latency.jitter_ms = l.value("jitter_ms", p.latency.jitter_ms);
    }
    p.updates = j.value("updates", p.updates);
    p.virtual_time = j.value("virtual_time", p.virtual_time);
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfigInvalid, e.what());
  }
  p.validate();
  return p;
}

UptimeSummary uptime_exposure(const std::vector<UptimeInterval>& provider_log, const std::vector<FetchWindow>& fetches,
                              double experiment_ms, std::size_t expected_intervals) {
  UptimeSummary u;
  u.intervals = provider_log.size();
  u.expected_intervals = expected_intervals;
  for (const auto& i : provider_log) u.provider_online_ms += i.duration_ms();
  u.experiment_ms = experiment_ms;
  u.online_fraction = experiment_ms > 0 ? u.provider_online_ms / experiment_ms : 0;
  u.client_fetches = fetches.size();
  for (const auto& f : fetches) {
    for (const auto& i : provider_log) {
      if (f.start_ms < i.disconnect_ms && i.connect_ms < f.end_ms) {
        ++u.fetches_overlapping_provider;
        break;
      }
    }
  }
  return u;
}

const CellResult* BenchReport::find(RelayMode mode, std::int64_t size, Variant variant) const {
  for (const auto& c : cells) {
    if (c.mode == mode && c.page_size == size && c.variant == variant) return &c;
  }
  return nullptr;
}

const CellComparison* BenchReport::comparison(RelayMode mode, std::int64_t size) const {
  for (const auto& c : comparisons) {
    if (c.mode == mode && c.page_size == size) return &c;
  }
  return nullptr;
}

std::string BenchReport::to_json() const {
  json j;
  j["plan"] = json::parse(plan.to_json());
  j["metadata"] = {{"channel_policy", channel_policy},
                   {"confidence_interval", "Student-t, 99%"},
                   {"latency_draws_sha256", latency_draws_sha256},
                   {"wall_seconds", wall_seconds}};
  json cells_j = json::array();
  for (const auto& c : cells) {
    cells_j.push_back({{"mode", std::string(transport::to_string(c.mode))},
                       {"page_size", c.page_size},
                       {"variant", std::string(to_string(c.variant))},
                       {"valid", c.valid},
                       {"status", c.valid ? "OK" : "INVALID"},
                       {"error", c.error},
                       {"body_sha256", c.body_sha256},
                       {"ttfb_ms", summary_json(c.ttfb)},
                       {"ttlb_ms", summary_json(c.ttlb)}});
  }
  j["cells"] = cells_j;
  json cmp = json::array();
  for (const auto& c : comparisons) {
    cmp.push_back({{"mode", std::string(transport::to_string(c.mode))},
                   {"page_size", c.page_size},
                   {"ttfb_overhead_percent", c.ttfb_overhead_percent ? json(*c.ttfb_overhead_percent) : json(nullptr)},
                   {"ttlb_overhead_percent", c.ttlb_overhead_percent ? json(*c.ttlb_overhead_percent) : json(nullptr)},
                   {"ttfb_intervals_overlap", c.ttfb_intervals_overlap},
                   {"ttlb_intervals_overlap", c.ttlb_intervals_overlap},
                   {"bodies_identical", c.bodies_identical}});
  }
  j["comparisons"] = cmp;
  json intervals = json::array();
  for (const auto& i : provider_intervals) intervals.push_back(json::parse(i.to_json()));
  j["uptime"] = {{"intervals", uptime.intervals},
                 {"expected_intervals", uptime.expected_intervals},
                 {"provider_online_ms", uptime.provider_online_ms},
                 {"experiment_ms", uptime.experiment_ms},
                 {"online_fraction", uptime.online_fraction},
                 {"client_fetches", uptime.client_fetches},
                 {"fetches_overlapping_provider", uptime.fetches_overlapping_provider},
                 {"provider_intervals", intervals}};
  return j.dump(2);
}

void BenchReport::write_csv(std::ostream& out) const {
  out << "mode,size,variant,iteration,ttfb_ms,ttlb_ms\n";
  out << std::setprecision(9);
  for (const auto& c : cells) {
    for (const auto& s : c.samples) {
      out << transport::to_string(c.mode) << ',' << c.page_size << ',' << to_string(c.variant) << ','
          << s.iteration << ',' << s.ttfb_ms << ',' << s.ttlb_ms << '\n';
    }
  }
}

std::string BenchReport::summary_table() const {
  std::ostringstream os;
  auto cell_text = [](const CellResult* c, bool first_byte) -> std::string {
    if (!c) return "-";
    if (!c->valid) return "INVALID";
    const auto& s = first_byte ? c->ttfb : c->ttlb;
    return fmt(s.mean) + " +/- " + fmt(s.ci_half_width);
  };
  for (auto size : plan.page_sizes_bytes) {
    for (bool first_byte : {true, false}) {
      os << (first_byte ? "TTFB" : "TTLB") << " (ms), page " << size << " bytes, mean +/- 99% CI\n";
      os << std::left << std::setw(14) << "mode" << std::setw(24) << "vanilla" << std::setw(24) << "enclave"
         << "overhead %\n";
      for (auto mode : plan.modes) {
        auto cmp = comparison(mode, size);
        std::optional<double> ov;
        if (cmp) ov = first_byte ? cmp->ttfb_overhead_percent : cmp->ttlb_overhead_percent;
        os << std::left << std::setw(14) << transport::to_string(mode) << std::setw(24)
           << cell_text(find(mode, size, Variant::kVanilla), first_byte) << std::setw(24)
           << cell_text(find(mode, size, Variant::kEnclave), first_byte) << (ov ? fmt(*ov) : "n/a") << "\n";
      }
      os << "\n";
    }
  }
  os << "Provider uptime: " << uptime.intervals << " intervals (expected " << uptime.expected_intervals << "), "
     << fmt(uptime.provider_online_ms) << " ms online of " << fmt(uptime.experiment_ms) << " ms ("
     << fmt(uptime.online_fraction * 100.0, 4) << "%), " << uptime.client_fetches << " client fetches, "
     << uptime.fetches_overlapping_provider << " during provider sessions\n";
  os << "Channel policy: " << channel_policy << "\n";
  return os.str();
}

void BenchReport::write(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  {
    std::ofstream csv(dir / "raw.csv", std::ios::trunc);
    write_csv(csv);
  }
  {
    std::ofstream rep(dir / "report.json", std::ios::trunc);
    rep << to_json() << "\n";
  }
  std::ofstream sum(dir / "summary.txt", std::ios::trunc);
  sum << summary_table();
  if (!sum) fail(ErrorCode::kConfigInvalid, "cannot write bench output to " + dir.string());
}

// ---------------------------------------------------------------------------

namespace {

class GridRunner {
 public:
  GridRunner(const BenchPlan& plan, const BenchProgress& progress)
      : plan_(plan), progress_(progress), clock_(make_clock(plan.virtual_time)) {}

  BenchReport run() {
    auto wall_start = std::chrono::steady_clock::now();
    network_ = std::make_shared<transport::Network>(transport::TransportConfig{}, clock_);
    VaultConfig vc;
    vc.ram_limit_bytes = 1ll << 30;
    vc.disk_limit_bytes = 1ll << 30;
    vc.bandwidth_bytes_per_sec = 1e12;
    vc.bandwidth_burst_bytes = 1ll << 40;
    VaultOptions vo;
    vo.periodic_backup = false;
    VaultDaemon vault(vc, network_, nullptr, vo);
    vault.advertise_vchs();

    std::map<std::string, Bytes> pages;
    for (auto size : plan_.page_sizes_bytes) pages[page_path(size)] = make_page(size, plan_.seed);

    auto experiment_start = clock_->now_ms();
    CircuitProfile provider_params = provider_circuit();
    auto secret = to_bytes("bench-provider-secret-" + std::to_string(plan_.seed));

    // Enclave variant: the provider under observation.
    HpBuildOptions enclave_opts;
    enclave_opts.bind_port = 8080;
    auto enclave_hp = build_hp(secret, enclave_opts);
    ProviderProfile ep;
    ep.auth_secret = secret;
    ep.expected_measurement = enclave_hp.measurement;
    ep.vault_vchs = vault.vchs_onion();
    ep.vault_attestation_key = vault.attestation_public_key();
    ProviderClient provider(*network_, ep, provider_params);
    auto enclave_ad = provider.bootstrap(enclave_hp.bytes, pages);
    report(std::string("enclave service bootstrapped at ") + enclave_ad.onion_url);

    // Vanilla variant: same pages, same channel, no TEE.
    HpBuildOptions vanilla_opts;
    vanilla_opts.bind_port = 8081;
    auto vanilla_hp = build_hp(secret, vanilla_opts);
    auto vanilla_service = vault.host_vanilla(vanilla_hp.bytes);
    ProviderProfile vp = ep;
    vp.expected_measurement = vanilla_hp.measurement;
    vp.service_onion = vanilla_service->onion_url();
    ProviderOptions unattested;
    unattested.verify_attestation = false;
    ProviderClient baseline(*network_, vp, provider_params, unattested);
    std::vector<ContentChange> uploads;
    for (const auto& [path, data] : pages) uploads.push_back(ContentChange::upload(path, data));
    baseline.update_content(uploads).throw_if_partial();
    auto vanilla_ad = baseline.advertisement();

    pins_.import_advertisement(enclave_ad);
    pins_.import_advertisement(vanilla_ad);
    targets_[Variant::kVanilla] = vanilla_ad.onion_url;
    targets_[Variant::kEnclave] = enclave_ad.onion_url;

    std::vector<std::pair<RelayMode, std::int64_t>> grid;
    for (auto size : plan_.page_sizes_bytes) {
      for (auto mode : plan_.modes) grid.emplace_back(mode, size);
    }
    const std::size_t total_cells = grid.size() * 2;
    std::size_t done_cells = 0;
    int updates_done = 0;
    auto maybe_update = [&] {
      while (updates_done < plan_.updates &&
             done_cells >= total_cells * static_cast<std::size_t>(updates_done + 1) /
                               static_cast<std::size_t>(plan_.updates + 1)) {
        ++updates_done;
        auto path = "/news/update-" + std::to_string(updates_done) + ".html";
        provider.update_content({ContentChange::upload(path, to_bytes("update " + std::to_string(updates_done)))})
            .throw_if_partial();
        report("provider update " + std::to_string(updates_done) + " applied");
      }
    };

    BenchReport out;
    out.plan = plan_;
    out.channel_policy = kChannelPolicy;
    for (const auto& [mode, size] : grid) {
      auto expected = hex_encode(crypto::sha256(pages[page_path(size)]));
      for (auto variant : {Variant::kVanilla, Variant::kEnclave}) {
        out.cells.push_back(run_cell(mode, size, variant, expected));
        ++done_cells;
        const auto& c = out.cells.back();
        report(std::string(transport::to_string(mode)) + " " + std::to_string(size) + " " +
               std::string(to_string(variant)) + (c.valid ? "" : " INVALID: " + c.error) + " ttlb mean " +
               fmt(c.ttlb.mean) + " ms");
        maybe_update();
      }
      const auto* v = out.find(mode, size, Variant::kVanilla);
      const auto* e = out.find(mode, size, Variant::kEnclave);
      CellComparison cmp;
      cmp.mode = mode;
      cmp.page_size = size;
      if (v->valid && e->valid) {
        cmp.ttfb_overhead_percent = overhead(v->ttfb.mean, e->ttfb.mean);
        cmp.ttlb_overhead_percent = overhead(v->ttlb.mean, e->ttlb.mean);
        cmp.ttfb_intervals_overlap = overlap(v->ttfb, e->ttfb);
        cmp.ttlb_intervals_overlap = overlap(v->ttlb, e->ttlb);
        cmp.bodies_identical = v->body_sha256 == e->body_sha256 && v->body_sha256 == expected;
      }
      out.comparisons.push_back(cmp);
    }
    while (updates_done < plan_.updates) {
      done_cells = total_cells;
      maybe_update();
    }

    auto experiment_ms = clock_->now_ms() - experiment_start;
    out.provider_intervals = provider.profile().uptime_log;
    out.uptime = uptime_exposure(out.provider_intervals, fetch_windows_, experiment_ms,
                                 1 + static_cast<std::size_t>(plan_.updates));
    out.latency_draws_sha256 = hex_encode(crypto::sha256(as_bytes(draws_.str())));
    out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
    vault.shutdown();
    network_->shutdown();
    return out;
  }

 private:
  CircuitProfile provider_circuit() const {
    auto p = plan_.latency;
    p.mode = RelayMode::kRandomRelays;
    return CircuitProfile(p, mix(plan_.seed, 0xfeed));
  }

  CircuitProfile cell_profile(RelayMode mode, std::int64_t size, int circuit) const {
    if (mode == RelayMode::kLocal) return CircuitProfile::local();
    auto p = plan_.latency;
    p.mode = mode;
    // Identical seeds for both variants give both the same latency draws;
    // fixed circuits are shared across page sizes too.
    std::uint64_t seed = mode == RelayMode::kFixedRelays ? mix(plan_.seed, 1000 + static_cast<std::uint64_t>(circuit))
                                                         : mix(mix(plan_.seed, static_cast<std::uint64_t>(size)), 7);
    return CircuitProfile(p, seed);
  }

  void record_load(CellResult& cell, ClientSession& session, const FetchResult& r, int iteration, int circuit,
                   double start_ms, const std::string& expected) {
    LoadSample s{iteration, circuit, r.ttfb_ms, r.ttlb_ms, session.circuit().base_one_way_ms()};
    cell.samples.push_back(s);
    fetch_windows_.push_back({start_ms, clock_->now_ms()});
    draws_ << s.path_one_way_ms << ';';
    auto body = hex_encode(r.body_sha256);
    if (body != expected) fail(ErrorCode::kRejected, "body hash mismatch at load " + std::to_string(iteration));
    cell.body_sha256 = body;
  }

  CellResult run_cell(RelayMode mode, std::int64_t size, Variant variant, const std::string& expected) {
    CellResult cell;
    cell.mode = mode;
    cell.page_size = size;
    cell.variant = variant;
    const auto& onion = targets_[variant];
    const auto path = page_path(size);
    try {
      if (mode == RelayMode::kRandomRelays) {
        auto profile = cell_profile(mode, size, 0);
        for (int i = 0; i < plan_.loads_per_page; ++i) {
          auto start = clock_->now_ms();
          auto session = ClientSession::open(*network_, onion, pins_, profile);
          auto r = session.get(path);
          record_load(cell, session, r, i, 0, start, expected);
        }
      } else {
        int circuits = mode == RelayMode::kFixedRelays ? plan_.fixed_circuits : 1;
        for (int c = 0; c < circuits; ++c) {
          auto profile = cell_profile(mode, size, c);
          auto session = ClientSession::open(*network_, onion, pins_, profile);
          for (int i = 0; i < plan_.loads_per_page; ++i) {
            auto start = clock_->now_ms();
            auto r = session.get(path);
            record_load(cell, session, r, c * plan_.loads_per_page + i, c, start, expected);
          }
        }
      }
    } catch (const Error& e) {
      cell.valid = false;
      cell.error = e.what();
    }
    std::vector<double> ttfb, ttlb;
    for (const auto& s : cell.samples) {
      ttfb.push_back(s.ttfb_ms);
      ttlb.push_back(s.ttlb_ms);
    }
    cell.ttfb = summarize(ttfb);
    cell.ttlb = summarize(ttlb);
    return cell;
  }

  void report(const std::string& msg) {
    if (progress_) progress_(msg);
  }

  const BenchPlan& plan_;
  const BenchProgress& progress_;
  std::shared_ptr<Clock> clock_;
  std::shared_ptr<transport::Network> network_;
  PinStore pins_;
  std::map<Variant, std::string> targets_;
  std::vector<FetchWindow> fetch_windows_;
  std::ostringstream draws_;
};

}  // namespace

BenchReport run_pair(const BenchPlan& plan, const BenchProgress& progress) {
  plan.validate();
  GridRunner runner(plan, progress);
  return runner.run();
}

}  // namespace vaultor
