#include "tribody/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "tribody/disorder.hpp"
#include "tribody/errors.hpp"
#include "tribody/mc.hpp"
#include "tribody/multispin.hpp"
#include "tribody/observables.hpp"
#include "tribody/rng.hpp"

namespace tribody {

using nlohmann::json;

namespace {

std::atomic<bool> g_stop{false};

std::string shortest(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::uint64_t bits_of(double v) { return std::bit_cast<std::uint64_t>(v); }

const std::set<std::string> kTopKeys = {"schema",        "lattice",      "master_seed",   "workers",
                                        "output_dir",    "checkpoint_interval", "engine", "lane_width",
                                        "measure_every", "analysis_seed", "average_k_directions", "rows"};
const std::set<std::string> kRowKeys = {"p", "L", "samples", "b", "T_min", "T_max", "n_T"};

class FieldReader {
 public:
  FieldReader(const json& j, std::string prefix, std::vector<std::string>& errors)
      : j_(j), prefix_(std::move(prefix)), errors_(errors) {}

  template <typename T>
  void read(const char* key, T& out, bool required) {
    if (!j_.contains(key)) {
      if (required) errors_.push_back(prefix_ + key + ": missing");
      return;
    }
    const json& v = j_.at(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) return bad(key, "a boolean");
      out = v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) return bad(key, "a string");
      out = v.get<std::string>();
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
      if (!v.is_number_unsigned()) return bad(key, "a non-negative integer");
      out = v.get<std::uint64_t>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) return bad(key, "an integer");
      out = v.get<T>();
    } else {
      if (!v.is_number()) return bad(key, "a number");
      out = v.get<T>();
    }
  }

  template <typename T>
  void read_list(const char* key, std::vector<T>& out) {
    if (!j_.contains(key)) {
      errors_.push_back(prefix_ + key + ": missing");
      return;
    }
    const json& v = j_.at(key);
    auto one = [&](const json& e) {
      if constexpr (std::is_integral_v<T>) {
        if (!e.is_number_integer()) return false;
      } else {
        if (!e.is_number()) return false;
      }
      out.push_back(e.get<T>());
      return true;
    };
    const char* what = std::is_integral_v<T> ? "an integer or a list of integers" : "a number or a list of numbers";
    if (v.is_array()) {
      for (const auto& e : v)
        if (!one(e)) return bad(key, what);
    } else if (!one(v)) {
      bad(key, what);
    }
  }

  void unknown_keys(const std::set<std::string>& known) {
    for (const auto& [k, _] : j_.items())
      if (!known.count(k)) errors_.push_back(prefix_ + k + ": unknown key");
  }

 private:
  void bad(const char* key, const char* what) { errors_.push_back(prefix_ + key + ": expected " + what); }
  const json& j_;
  std::string prefix_;
  std::vector<std::string>& errors_;
};

std::string join_lines(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& e : v) s += (s.empty() ? "" : "\n") + e;
  return s;
}

}  // namespace

const char* to_string(EngineKind e) { return e == EngineKind::multispin ? "multispin" : "scalar"; }

std::vector<std::string> validate_config(const SweepConfig& cfg) {
  std::vector<std::string> err;
  if (cfg.schema != kConfigSchema)
    err.push_back("schema: unsupported version " + std::to_string(cfg.schema) + " (expected " +
                  std::to_string(kConfigSchema) + ")");
  if (cfg.workers < 1) err.push_back("workers: must be at least 1");
  if (cfg.output_dir.empty()) err.push_back("output_dir: must not be empty");
  if (cfg.engine == EngineKind::multispin && cfg.lane_width != 64 && cfg.lane_width != 512)
    err.push_back("lane_width: must be 64 or 512");
  if (cfg.measure_every < 1 || !std::has_single_bit(static_cast<unsigned>(cfg.measure_every)))
    err.push_back("measure_every: must be a power of two");
  if (cfg.rows.empty()) err.push_back("rows: at least one row is required");
  std::map<std::pair<std::uint64_t, int>, std::size_t> seen;
  for (std::size_t r = 0; r < cfg.rows.size(); ++r) {
    const auto& row = cfg.rows[r];
    const std::string at = "rows[" + std::to_string(r) + "].";
    if (row.p.empty()) err.push_back(at + "p: at least one value is required");
    for (std::size_t i = 0; i < row.p.size(); ++i)
      if (!(row.p[i] >= 0.0 && row.p[i] < 0.5))
        err.push_back(at + "p[" + std::to_string(i) + "]: must lie in [0, 0.5), got " + shortest(row.p[i]));
    if (row.L.empty()) err.push_back(at + "L: at least one value is required");
    for (std::size_t i = 0; i < row.L.size(); ++i) {
      try {
        check_lattice_size(cfg.lattice, row.L[i]);
      } catch (const SizeError& e) {
        err.push_back(at + "L[" + std::to_string(i) + "]: " + e.what());
      }
    }
    if (row.samples < 1) err.push_back(at + "samples: must be at least 1");
    if (row.b < 4 || row.b > 40) err.push_back(at + "b: must lie in [4, 40], got " + std::to_string(row.b));
    if (row.n_T < 2) err.push_back(at + "n_T: must be at least 2, got " + std::to_string(row.n_T));
    if (!(row.T_min > 0.0)) err.push_back(at + "T_min: must be positive");
    if (!(row.T_max > row.T_min)) err.push_back(at + "T_max: must exceed T_min");
    if (row.b >= 4 && row.b <= 40 && cfg.measure_every >= 1 &&
        (std::uint64_t{1} << row.b) / static_cast<std::uint64_t>(cfg.measure_every) < 16)
      err.push_back(at + "b: 2^b / measure_every must be at least 16 so that four log bins exist");
    for (double p : row.p)
      for (int L : row.L) {
        const auto key = std::make_pair(bits_of(p), L);
        if (auto it = seen.find(key); it != seen.end()) {
          if (it->second != r)
            err.push_back(at + "point p=" + shortest(p) + ", L=" + std::to_string(L) + " is already defined in rows[" +
                          std::to_string(it->second) + "]");
        } else {
          seen[key] = r;
        }
      }
  }
  return err;
}

SweepConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  std::vector<std::string> errors;
  SweepConfig cfg;
  FieldReader top(j, "", errors);
  top.unknown_keys(kTopKeys);
  top.read("schema", cfg.schema, true);
  std::string lattice, engine = to_string(cfg.engine);
  top.read("lattice", lattice, true);
  if (!lattice.empty()) {
    try {
      cfg.lattice = parse_lattice_kind(lattice);
    } catch (const ConfigError& e) {
      errors.push_back(std::string("lattice: ") + e.what());
    }
  }
  top.read("master_seed", cfg.master_seed, true);
  top.read("workers", cfg.workers, false);
  top.read("output_dir", cfg.output_dir, false);
  top.read("checkpoint_interval", cfg.checkpoint_interval, false);
  top.read("engine", engine, false);
  if (engine == "multispin")
    cfg.engine = EngineKind::multispin;
  else if (engine == "scalar")
    cfg.engine = EngineKind::scalar;
  else
    errors.push_back("engine: expected \"multispin\" or \"scalar\", got \"" + engine + "\"");
  top.read("lane_width", cfg.lane_width, false);
  top.read("measure_every", cfg.measure_every, false);
  top.read("analysis_seed", cfg.analysis_seed, false);
  top.read("average_k_directions", cfg.average_k_directions, false);
  if (!j.contains("rows")) {
    errors.push_back("rows: missing");
  } else if (!j.at("rows").is_array()) {
    errors.push_back("rows: expected a list");
  } else {
    std::size_t r = 0;
    for (const auto& jr : j.at("rows")) {
      const std::string at = "rows[" + std::to_string(r++) + "].";
      if (!jr.is_object()) {
        errors.push_back(at.substr(0, at.size() - 1) + ": expected an object");
        continue;
      }
      SweepRow row;
      FieldReader rr(jr, at, errors);
      rr.unknown_keys(kRowKeys);
      rr.read_list("p", row.p);
      rr.read_list("L", row.L);
      rr.read("samples", row.samples, true);
      rr.read("b", row.b, true);
      rr.read("T_min", row.T_min, true);
      rr.read("T_max", row.T_max, true);
      rr.read("n_T", row.n_T, true);
      cfg.rows.push_back(row);
    }
  }
  std::set<std::string> reported;
  for (const auto& e : errors) reported.insert(e.substr(0, e.find(':')));
  for (auto& e : validate_config(cfg))
    if (!reported.count(e.substr(0, e.find(':')))) errors.push_back(std::move(e));
  if (!errors.empty()) throw ConfigError(join_lines(errors));
  return cfg;
}

SweepConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const SweepConfig& cfg) {
  json j = json::object();
  j["schema"] = cfg.schema;
  j["lattice"] = to_string(cfg.lattice);
  j["master_seed"] = cfg.master_seed;
  j["workers"] = cfg.workers;
  j["output_dir"] = cfg.output_dir;
  j["checkpoint_interval"] = cfg.checkpoint_interval;
  j["engine"] = to_string(cfg.engine);
  j["lane_width"] = cfg.lane_width;
  j["measure_every"] = cfg.measure_every;
  j["analysis_seed"] = cfg.analysis_seed;
  j["average_k_directions"] = cfg.average_k_directions;
  j["rows"] = json::array();
  for (const auto& r : cfg.rows) {
    json jr = json::object();
    jr["p"] = r.p;
    jr["L"] = r.L;
    jr["samples"] = r.samples;
    jr["b"] = r.b;
    jr["T_min"] = r.T_min;
    jr["T_max"] = r.T_max;
    jr["n_T"] = r.n_T;
    j["rows"].push_back(jr);
  }
  return j.dump(2) + "\n";
}

std::vector<SweepPoint> expand_points(const SweepConfig& cfg) {
  std::vector<SweepPoint> pts;
  for (const auto& row : cfg.rows)
    for (double p : row.p)
      for (int L : row.L) pts.push_back({p, L, row.samples, row.b, linear_ladder(row.T_min, row.T_max, row.n_T)});
  std::sort(pts.begin(), pts.end(), [](const SweepPoint& a, const SweepPoint& b) {
    return std::make_pair(a.p, a.L) < std::make_pair(b.p, b.L);
  });
  return pts;
}

std::uint64_t sample_seed(std::uint64_t master, double p, int L, int sample) {
  return derive_seed({master, bits_of(p), static_cast<std::uint64_t>(L), static_cast<std::uint64_t>(sample)});
}

double estimated_cost_seconds(const SweepConfig& cfg) {
  // Per lane-flip costs measured on a single desktop core.
  double flip_ns, measure_ns;
  int width = 1;
  if (cfg.engine == EngineKind::scalar) {
    flip_ns = 20.0;
    measure_ns = 10.0;
  } else if (cfg.lane_width == 64) {
    flip_ns = 1.5;
    measure_ns = 0.4;
    width = 64;
  } else {
    flip_ns = 0.45;
    measure_ns = 0.65;
    width = 512;
  }
  double total = 0.0;
  for (const auto& pt : expand_points(cfg)) {
    const Lattice lat = build_lattice(cfg.lattice, pt.L);
    const double lanes = width == 1 ? pt.samples : std::ceil(static_cast<double>(pt.samples) / width) * width;
    const double flips = lanes * 2.0 * static_cast<double>(pt.temperatures.size()) * lat.num_sites() *
                         std::ldexp(1.0, pt.b);
    total += flips * (flip_ns + measure_ns / cfg.measure_every) * 1e-9;
  }
  return total;
}

std::string cost_report(const SweepConfig& cfg) {
  std::ostringstream os;
  const auto pts = expand_points(cfg);
  const double s = estimated_cost_seconds(cfg);
  os << pts.size() << " (p, L) points, " << to_string(cfg.lattice) << " lattice, " << to_string(cfg.engine)
     << " engine";
  if (cfg.engine == EngineKind::multispin) os << " (" << cfg.lane_width << " lanes)";
  os << "\nestimated cost: " << s / 3600.0 << " core-hours (" << s / 3600.0 / std::max(1, cfg.workers)
     << " h with " << cfg.workers << " workers)\n";
  return os.str();
}

int effective_workers(int configured) {
  if (const char* env = std::getenv("TRIBODY_WORKERS")) {
    int v = 0;
    auto r = std::from_chars(env, env + std::strlen(env), v);
    if (r.ec == std::errc() && *r.ptr == '\0' && v > 0) return v;
  }
  return configured;
}

void request_stop() noexcept { g_stop.store(true); }
void clear_stop() noexcept { g_stop.store(false); }

namespace {

namespace fs = std::filesystem;

constexpr int kTailBins = 3;
constexpr char kBatchMagic[8] = {'T', 'B', 'I', 'B', 'A', 'T', 'C', 'H'};
constexpr std::uint32_t kBatchVersion = 1;

// Observables whose last bins must agree: energy and the moments entering
// xi_m and xi_SG.
constexpr Obs kCheckedObs[] = {Obs::energy, Obs::m2, Obs::mkx2, Obs::q2, Obs::qkx2};

struct Task {
  std::size_t point = 0;
  int batch = 0;
  int first = 0;  // first sample index
  int count = 0;
};

struct SampleRecord {
  std::uint64_t index = 0;
  std::uint64_t disorder_seed = 0;
  std::vector<double> production;  // [T][obs]
  std::vector<double> tail_mean;   // [bin][T][obs], last kTailBins bins
  std::vector<double> tail_err;
};

fs::path point_dir(const fs::path& out, const SweepPoint& pt) {
  return out / "points" / ("p" + shortest(pt.p) + "_L" + std::to_string(pt.L));
}

std::string batch_stem(int batch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "batch%04d", batch);
  return buf;
}

std::uint64_t task_hash(const SweepConfig& cfg, const SweepPoint& pt, const Task& t) {
  Fnv1a h;
  h.add(static_cast<int>(cfg.lattice));
  h.add(static_cast<int>(cfg.engine));
  h.add(cfg.lane_width);
  h.add(cfg.measure_every);
  h.add(cfg.master_seed);
  h.add(cfg.average_k_directions);
  h.add(pt.p);
  h.add(pt.L);
  h.add(pt.b);
  for (double T : pt.temperatures) h.add(T);
  h.add(t.batch);
  h.add(t.first);
  h.add(t.count);
  return h.value();
}

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IntegrityError("batch file truncated");
  return v;
}
void put_doubles(std::ostream& os, const std::vector<double>& v) {
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}
void get_doubles(std::istream& is, std::vector<double>& v, std::size_t n) {
  v.resize(n);
  is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) throw IntegrityError("batch file truncated");
}

void write_atomic(const fs::path& path, const std::string& bytes) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw std::runtime_error("cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

void write_batch(const fs::path& path, std::uint64_t hash, int n_temps, int n_bins,
                 const std::vector<SampleRecord>& recs) {
  std::ostringstream os(std::ios::binary);
  os.write(kBatchMagic, 8);
  put(os, kBatchVersion);
  put(os, hash);
  put(os, static_cast<std::uint32_t>(recs.size()));
  put(os, static_cast<std::uint32_t>(n_temps));
  put(os, static_cast<std::uint32_t>(kNumObs));
  put(os, static_cast<std::uint32_t>(n_bins));
  for (const auto& r : recs) {
    put(os, r.index);
    put(os, r.disorder_seed);
    put_doubles(os, r.production);
    put_doubles(os, r.tail_mean);
    put_doubles(os, r.tail_err);
  }
  write_atomic(path, os.str());
}

std::vector<SampleRecord> read_batch(const fs::path& path, std::uint64_t hash, int n_temps) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IntegrityError("cannot open " + path.string());
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kBatchMagic, 8) != 0) throw IntegrityError(path.string() + ": not a batch file");
  if (get<std::uint32_t>(is) != kBatchVersion) throw IntegrityError(path.string() + ": unsupported version");
  if (get<std::uint64_t>(is) != hash) throw IntegrityError(path.string() + ": belongs to a different plan");
  const auto n = get<std::uint32_t>(is);
  if (get<std::uint32_t>(is) != static_cast<std::uint32_t>(n_temps) || get<std::uint32_t>(is) != kNumObs)
    throw IntegrityError(path.string() + ": shape mismatch");
  (void)get<std::uint32_t>(is);
  const std::size_t per = static_cast<std::size_t>(n_temps) * kNumObs;
  std::vector<SampleRecord> recs(n);
  for (auto& r : recs) {
    r.index = get<std::uint64_t>(is);
    r.disorder_seed = get<std::uint64_t>(is);
    get_doubles(is, r.production, per);
    get_doubles(is, r.tail_mean, per * kTailBins);
    get_doubles(is, r.tail_err, per * kTailBins);
  }
  return recs;
}

SampleRecord record_from(const SimulationResult& res, std::uint64_t index, std::uint64_t dseed) {
  SampleRecord r;
  r.index = index;
  r.disorder_seed = dseed;
  const int nt = static_cast<int>(res.temperatures.size());
  for (const auto& a : res.production) r.production.insert(r.production.end(), a.begin(), a.end());
  const int nb = res.bins.n_bins();
  for (int k = nb - kTailBins; k < nb; ++k)
    for (int t = 0; t < nt; ++t)
      for (int o = 0; o < kNumObs; ++o) {
        r.tail_mean.push_back(res.bins.mean(k, t, o));
        r.tail_err.push_back(res.bins.error(k, t, o));
      }
  return r;
}

class Logger {
 public:
  explicit Logger(std::ostream* os) : os_(os) {}
  void line(const std::string& s) {
    if (!os_) return;
    std::lock_guard<std::mutex> g(m_);
    *os_ << s << std::endl;
  }

 private:
  std::ostream* os_;
  std::mutex m_;
};

// Returns false when interrupted (state checkpointed).
bool run_task(const SweepConfig& cfg, const SweepPoint& pt, const Task& task, const fs::path& dir, bool resume) {
  const Lattice lat = build_lattice(cfg.lattice, pt.L);
  const fs::path result = dir / (batch_stem(task.batch) + ".bin");
  const fs::path ckpt = dir / (batch_stem(task.batch) + ".ckpt");
  const std::uint64_t hash = task_hash(cfg, pt, task);
  Schedule sc;
  sc.temperatures = pt.temperatures;
  sc.n_sweeps = std::uint64_t{1} << pt.b;
  sc.measure_every = cfg.measure_every;
  sc.measure_ky = cfg.average_k_directions;
  const std::uint64_t interval = cfg.checkpoint_interval ? cfg.checkpoint_interval : sc.n_sweeps;

  std::vector<SampleRecord> recs;
  if (cfg.engine == EngineKind::scalar) {
    const std::uint64_t seed = sample_seed(cfg.master_seed, pt.p, pt.L, task.first);
    const DisorderRealization dis = sample_disorder(lat, pt.p, seed);
    sc.seed = seed;
    Simulation sim = resume && fs::exists(ckpt) ? Simulation::restore(ckpt, lat, dis, sc) : Simulation(lat, dis, sc);
    while (!sim.finished()) {
      if (g_stop.load()) {
        sim.save_checkpoint(ckpt);
        return false;
      }
      sim.advance(std::min(interval, sc.n_sweeps - sim.sweeps_done()));
      if (cfg.checkpoint_interval && !sim.finished()) sim.save_checkpoint(ckpt);
    }
    recs.push_back(record_from(sim.result(), static_cast<std::uint64_t>(task.first), seed));
  } else {
    std::vector<DisorderRealization> lanes;
    std::vector<std::uint64_t> seeds;
    for (int s = task.first; s < task.first + task.count; ++s) {
      seeds.push_back(sample_seed(cfg.master_seed, pt.p, pt.L, s));
      lanes.push_back(sample_disorder(lat, pt.p, seeds.back()));
    }
    sc.seed = derive_seed({cfg.master_seed, bits_of(pt.p), static_cast<std::uint64_t>(pt.L), 0x6261746368ULL,
                           static_cast<std::uint64_t>(task.batch)});
    MultiSpinSimulation sim = resume && fs::exists(ckpt)
                                  ? MultiSpinSimulation::restore(ckpt, lat, lanes, sc, cfg.lane_width)
                                  : MultiSpinSimulation(lat, lanes, sc, cfg.lane_width);
    while (!sim.finished()) {
      if (g_stop.load()) {
        sim.save_checkpoint(ckpt);
        return false;
      }
      sim.advance(std::min(interval, sc.n_sweeps - sim.sweeps_done()));
      if (cfg.checkpoint_interval && !sim.finished()) sim.save_checkpoint(ckpt);
    }
    for (int l = 0; l < task.count; ++l)
      recs.push_back(record_from(sim.result(l), static_cast<std::uint64_t>(task.first + l),
                                 seeds[static_cast<std::size_t>(l)]));
  }
  const int n_bins = schedule_bin_count(sc);
  write_batch(result, hash, static_cast<int>(pt.temperatures.size()), n_bins, recs);
  std::error_code ec;
  fs::remove(ckpt, ec);
  return true;
}

std::vector<Task> tasks_for(const SweepConfig& cfg, const std::vector<SweepPoint>& pts) {
  std::vector<Task> tasks;
  const int width = cfg.engine == EngineKind::scalar ? 1 : cfg.lane_width;
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (int first = 0, b = 0; first < pts[i].samples; first += width, ++b)
      tasks.push_back({i, b, first, std::min(width, pts[i].samples - first)});
  return tasks;
}

struct PointRows {
  std::vector<CsvPoint> rows;
  std::vector<Estimate> energy;
  std::vector<std::string> failures;  // per T, empty when equilibrated
};

PointRows merge_point(const SweepConfig& cfg, const SweepPoint& pt, const std::vector<SampleRecord>& recs) {
  const Lattice lat = build_lattice(cfg.lattice, pt.L);
  const int nt = static_cast<int>(pt.temperatures.size());
  std::vector<SampleAverages> samples;
  for (const auto& r : recs) {
    SampleAverages s;
    s.seed = r.disorder_seed;
    for (int t = 0; t < nt; ++t) {
      ThermalAverages a{};
      std::copy_n(r.production.begin() + static_cast<std::ptrdiff_t>(t) * kNumObs, kNumObs, a.begin());
      s.per_temperature.push_back(a);
    }
    samples.push_back(std::move(s));
  }
  AggregateOptions ao;
  ao.seed = derive_seed({cfg.analysis_seed, bits_of(pt.p), static_cast<std::uint64_t>(pt.L)});
  ao.average_k_directions = cfg.average_k_directions;
  const DisorderAggregate agg = aggregate(samples, lat, pt.temperatures, ao);

  PointRows out;
  const std::size_t n = recs.size();
  for (int t = 0; t < nt; ++t) {
    std::string failed;
    for (Obs o : kCheckedObs) {
      double mean[kTailBins], se[kTailBins];
      for (int k = 0; k < kTailBins; ++k) {
        const std::size_t idx = (static_cast<std::size_t>(k) * nt + t) * kNumObs + static_cast<std::size_t>(o);
        double s = 0, s2 = 0;
        for (const auto& r : recs) s += r.tail_mean[idx];
        mean[k] = s / static_cast<double>(n);
        if (n >= 2) {
          for (const auto& r : recs) s2 += (r.tail_mean[idx] - mean[k]) * (r.tail_mean[idx] - mean[k]);
          se[k] = std::sqrt(s2 / static_cast<double>(n - 1) / static_cast<double>(n));
        } else {
          se[k] = recs.front().tail_err[idx];
        }
      }
      bool ok = true;
      for (int i = 0; i < kTailBins; ++i)
        for (int j = i + 1; j < kTailBins; ++j) {
          const double tol = kDefaultAgreementSigmas * std::hypot(se[i], se[j]);
          if (!(std::abs(mean[i] - mean[j]) <= tol) || tol == 0.0) ok = false;
        }
      if (!ok) failed += std::string(failed.empty() ? "" : ";") + obs_name(o);
    }
    const AggregatePoint& ap = agg.points[static_cast<std::size_t>(t)];
    CsvPoint c;
    c.p = pt.p;
    c.L = pt.L;
    c.T = pt.temperatures[static_cast<std::size_t>(t)];
    c.n_samples = agg.n_samples;
    c.chi0 = ap.chi0.value;
    c.chi0_err = ap.chi0.error;
    c.chikmin = ap.chik.value;
    c.chikmin_err = ap.chik.error;
    c.xi_over_L = ap.xi_over_L.value;
    c.xi_err = ap.xi_over_L.error;
    c.xi_sg_over_L = ap.xi_sg_over_L.value;
    c.xi_sg_err = ap.xi_sg_over_L.error;
    c.binder = ap.binder.value;
    c.binder_err = ap.binder.error;
    c.equilibrated = failed.empty();
    out.rows.push_back(c);
    out.energy.push_back(ap.energy);
    out.failures.push_back(failed);
  }
  return out;
}

}  // namespace

SweepOutcome run_sweep(const SweepConfig& cfg, const RunOptions& opt) {
  if (auto errs = validate_config(cfg); !errs.empty()) throw ConfigError(join_lines(errs));
  Logger log(opt.log);
  const fs::path out = cfg.output_dir;
  fs::create_directories(out);

  // The stored plan ignores the worker count, which never affects results.
  SweepConfig canon = cfg;
  canon.workers = 1;
  const fs::path stored = out / "config.json";
  if (fs::exists(stored)) {
    if (!opt.resume)
      throw ConfigError("output directory " + out.string() + " already holds a run; pass --resume to continue it");
    SweepConfig prev = load_config(stored);
    prev.workers = 1;
    prev.output_dir = canon.output_dir;
    if (!(prev == canon)) throw IntegrityError("config differs from the run stored in " + out.string());
  } else {
    write_atomic(stored, serialize_config(canon));
  }

  const auto pts = expand_points(cfg);
  const auto tasks = tasks_for(cfg, pts);
  for (const auto& pt : pts) fs::create_directories(point_dir(out, pt));

  std::vector<int> remaining(pts.size(), 0);
  for (const auto& t : tasks) ++remaining[t.point];
  std::vector<double> busy(pts.size(), 0.0);
  std::vector<char> done(tasks.size(), 0);
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto& t = tasks[i];
    if (fs::exists(point_dir(out, pts[t.point]) / (batch_stem(t.batch) + ".bin"))) {
      done[i] = 1;
      --remaining[t.point];
    }
  }

  const int workers = std::max(1, opt.workers > 0 ? opt.workers : effective_workers(cfg.workers));
  log.line(cost_report(cfg) + "running " + std::to_string(tasks.size()) + " batches on " + std::to_string(workers) +
           " workers");
  std::atomic<std::size_t> next{0};
  std::atomic<bool> interrupted{false};
  std::mutex m;
  std::exception_ptr failure;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      if (done[i]) continue;
      if (g_stop.load() || failure) {
        interrupted = true;
        return;
      }
      const Task& t = tasks[i];
      const SweepPoint& pt = pts[t.point];
      const auto t0 = std::chrono::steady_clock::now();
      bool finished = false;
      try {
        finished = run_task(cfg, pt, t, point_dir(out, pt), opt.resume);
      } catch (...) {
        std::lock_guard<std::mutex> g(m);
        if (!failure) failure = std::current_exception();
        return;
      }
      const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (!finished) {
        interrupted = true;
        return;
      }
      std::lock_guard<std::mutex> g(m);
      busy[t.point] += dt;
      if (--remaining[t.point] == 0) {
        std::ostringstream os;
        os << "p=" << shortest(pt.p) << " L=" << pt.L << ": " << pt.samples << " samples done, " << busy[t.point]
           << " s";
        log.line(os.str());
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);

  SweepOutcome res;
  res.points = static_cast<int>(pts.size());
  res.interrupted = interrupted.load();
  std::ostringstream csv, eq, en;
  csv << csv_header() << "\n";
  en << "p,L,T,n_samples,energy,energy_err\n";
  eq << "p,L,T,equilibrated,failed_observables\n";
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto& pt = pts[i];
    std::vector<SampleRecord> recs;
    bool complete = true;
    for (const auto& t : tasks) {
      if (t.point != i) continue;
      const fs::path f = point_dir(out, pt) / (batch_stem(t.batch) + ".bin");
      if (!fs::exists(f)) {
        complete = false;
        break;
      }
      auto r = read_batch(f, task_hash(cfg, pt, t), static_cast<int>(pt.temperatures.size()));
      recs.insert(recs.end(), std::make_move_iterator(r.begin()), std::make_move_iterator(r.end()));
    }
    if (!complete) continue;
    ++res.completed_points;
    const PointRows pr = merge_point(cfg, pt, recs);
    for (std::size_t t = 0; t < pr.rows.size(); ++t) {
      csv << csv_row(pr.rows[t]) << "\n";
      eq << format_g17(pt.p) << "," << pt.L << "," << format_g17(pr.rows[t].T) << ","
         << (pr.failures[t].empty() ? "true" : "false") << "," << pr.failures[t] << "\n";
      en << format_g17(pt.p) << "," << pt.L << "," << format_g17(pr.rows[t].T) << "," << pr.rows[t].n_samples << ","
         << format_g17(pr.energy[t].value) << "," << format_g17(pr.energy[t].error) << "\n";
      if (!pr.failures[t].empty()) ++res.unequilibrated;
    }
  }
  write_atomic(out / "results.csv", csv.str());
  write_atomic(out / "equilibration.csv", eq.str());
  write_atomic(out / "energies.csv", en.str());
  if (res.interrupted)
    log.line("interrupted: " + std::to_string(res.completed_points) + " of " + std::to_string(res.points) +
             " points complete; rerun with --resume");
  return res;
}

namespace {

std::string fmt_or_null(double v) { return std::isfinite(v) ? format_g17(v) : "nan"; }

json num_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

AnalysisOutcome analyze(const fs::path& dir) {
  const fs::path results = dir / "results.csv";
  if (!fs::exists(results)) throw InsufficientDataError("no results.csv in " + dir.string());
  std::ifstream in(results);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::vector<CsvPoint> rows = parse_csv(ss.str());

  std::optional<SweepConfig> cfg;
  if (fs::exists(dir / "config.json")) cfg = load_config(dir / "config.json");
  const std::uint64_t seed = cfg ? cfg->analysis_seed : 1;

  AnalysisOutcome outc;
  std::map<std::pair<double, int>, Curve> curves;
  for (const auto& r : rows) {
    if (!r.equilibrated) {
      outc.excluded.push_back({r.p, r.L, r.T, "not equilibrated"});
      continue;
    }
    if (!std::isfinite(r.xi_over_L) || !std::isfinite(r.xi_err)) {
      outc.excluded.push_back({r.p, r.L, r.T, "xi/L undefined"});
      continue;
    }
    auto& c = curves[{r.p, r.L}];
    c.L = r.L;
    c.points.push_back({r.T, r.xi_over_L, r.xi_err});
  }
  if (cfg)
    for (const auto& pt : expand_points(*cfg))
      if (!std::any_of(rows.begin(), rows.end(), [&](const CsvPoint& r) { return r.p == pt.p && r.L == pt.L; }))
        outc.excluded.push_back({pt.p, pt.L, std::numeric_limits<double>::quiet_NaN(), "missing from results"});
  if (curves.empty()) throw InsufficientDataError("no usable points in " + results.string());

  std::map<double, std::vector<Curve>> by_p;
  for (auto& [key, c] : curves) {
    std::sort(c.points.begin(), c.points.end(), [](const CurvePoint& a, const CurvePoint& b) { return a.T < b.T; });
    by_p[key.first].push_back(c);
  }

  std::map<double, std::vector<CrossingEstimate>> crossings;
  for (const auto& [p, cs] : by_p) {
    for (std::size_t i = 0; i < cs.size(); ++i)
      for (std::size_t j = i + 1; j < cs.size(); ++j) {
        CrossingOptions co;
        co.seed = derive_seed({seed, bits_of(p)});
        try {
          CrossingEstimate e = find_crossing(cs[i], cs[j], co);
          crossings[p].push_back(e);
          outc.crossings.push_back(e);
          outc.crossing_p.push_back(p);
        } catch (const InsufficientDataError& e) {
          outc.warnings.push_back("p=" + shortest(p) + ": " + e.what());
        }
      }
  }

  BoundaryOptions bo;
  bo.seed = derive_seed({seed, 0x7063ULL});
  outc.boundary = boundary_points(crossings, bo);
  try {
    PhaseBoundary pb = build_phase_boundary(crossings, bo);
    outc.has_p_c = true;
    outc.p_c = pb.p_c;
    for (auto& w : pb.warnings) outc.warnings.push_back(w);
  } catch (const InsufficientDataError& e) {
    outc.warnings.push_back(std::string("p_c not estimated: ") + e.what());
  }

  std::ostringstream collapse;
  collapse << "p,L,T,x,xi_over_L,err,T_c,nu\n";
  for (const auto& [p, cs] : by_p) {
    if (cs.size() < 3) continue;
    const auto bp = std::find_if(outc.boundary.begin(), outc.boundary.end(), [&](const BoundaryPoint& b) {
      return b.p == p && b.status == CrossingStatus::crossing;
    });
    if (bp == outc.boundary.end()) continue;
    CollapseOptions co;
    co.seed = derive_seed({seed, bits_of(p), 0x6e75ULL});
    const CollapseResult cr = scaling_collapse(cs, bp->T_c, 1.0, co);
    outc.nu_estimates.push_back({p, cr.nu, cr.nu_err, cr.converged});
    for (const auto& pt : cr.points)
      collapse << format_g17(p) << "," << pt.L << "," << format_g17(pt.T) << "," << format_g17(pt.x) << ","
               << format_g17(pt.y) << "," << format_g17(pt.err) << "," << format_g17(cr.T_c) << ","
               << format_g17(cr.nu) << "\n";
  }

  std::ostringstream boundary;
  boundary << "p,T_c,err,status\n";
  for (const auto& b : outc.boundary)
    boundary << format_g17(b.p) << "," << fmt_or_null(b.T_c) << "," << fmt_or_null(b.T_c_err) << ","
             << status_name(b.status) << "\n";

  std::ostringstream cross;
  cross << "p,L1,L2,status,T_cross,err,T_lo,T_hi,n_points,chi2_dof_1,chi2_dof_2,boot_failure,note\n";
  for (std::size_t i = 0; i < outc.crossings.size(); ++i) {
    const auto& e = outc.crossings[i];
    cross << format_g17(outc.crossing_p[i]) << "," << e.L1 << "," << e.L2 << "," << status_name(e.status) << ","
          << fmt_or_null(e.T_cross) << "," << fmt_or_null(e.err) << "," << format_g17(e.T_lo) << ","
          << format_g17(e.T_hi) << "," << e.n_points << "," << format_g17(e.chi2_dof[0]) << ","
          << format_g17(e.chi2_dof[1]) << "," << format_g17(e.boot_failure) << "," << e.note << "\n";
  }

  json pc = json::object();
  if (outc.has_p_c) {
    const auto& c = outc.p_c;
    pc["p_c"] = num_or_null(c.p_c);
    if (c.method == CriticalPoint::Method::nishimori_intersection)
      pc["err_or_bracket"] = num_or_null(c.err);
    else
      pc["err_or_bracket"] = json::array({num_or_null(c.lo), num_or_null(c.hi)});
    pc["method"] = method_name(c.method);
    pc["bracket"] = json::array({num_or_null(c.lo), num_or_null(c.hi)});
  } else {
    pc["p_c"] = nullptr;
    pc["err_or_bracket"] = nullptr;
    pc["method"] = "insufficient-boundary";
  }
  json nus = json::array();
  for (const auto& n : outc.nu_estimates)
    nus.push_back({{"p", n.p}, {"nu", num_or_null(n.nu)}, {"err", num_or_null(n.err)}, {"converged", n.converged}});
  pc["nu_estimates"] = nus;
  pc["warnings"] = outc.warnings;

  std::ostringstream report;
  report << "excluded points: " << outc.excluded.size() << "\n";
  for (const auto& x : outc.excluded)
    report << "  p=" << shortest(x.p) << " L=" << x.L << " T=" << (std::isfinite(x.T) ? shortest(x.T) : "all") << ": "
           << x.reason << "\n";
  report << "warnings: " << outc.warnings.size() << "\n";
  for (const auto& w : outc.warnings) report << "  " << w << "\n";

  write_atomic(dir / "boundary.csv", boundary.str());
  write_atomic(dir / "crossings.csv", cross.str());
  write_atomic(dir / "collapse.csv", collapse.str());
  write_atomic(dir / "pc.json", pc.dump(2) + "\n");
  write_atomic(dir / "analysis_report.txt", report.str());
  return outc;
}

}  // namespace tribody
