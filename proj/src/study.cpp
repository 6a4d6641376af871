#include "ssmiss/study.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <fstream>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "ssmiss/rng.hpp"

namespace ssmiss {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

using Clock = std::chrono::steady_clock;

struct Dataset {
  std::string mechanism;
  double rate = 0.0;
};

struct MethodOutcome {
  std::vector<ReportedParameter> estimates;
  bool converged = false;
};

FitRecord base_record(const StudyConfig& config, int cell, int rep) {
  FitRecord r;
  r.cell = cell;
  config.cell_levels(cell, r.sigma2, r.alpha, r.gamma);
  r.replication = rep;
  return r;
}

MethodOutcome fit_series(const MaskedSeries& series, const FitOptions& options) {
  const FitResult fit = fit_mle(series, options);
  return {reported_parameters(fit, options.likelihood.free_gamma21), fit.converged};
}

MethodOutcome run_method(Method method, const MaskedSeries& masked, const StudyConfig& config,
                         std::uint64_t mice_seed) {
  const FitOptions fit_options = config.fit();
  switch (method) {
    case Method::kComplete:
    case Method::kKalman:
      return fit_series(masked, fit_options);
    case Method::kEmArima:
    case Method::kEmSpline:
    case Method::kEmRegression: {
      const LevelModel model = method == Method::kEmArima    ? LevelModel::kArima
                               : method == Method::kEmSpline ? LevelModel::kSpline
                                                             : LevelModel::kRegression;
      const EmResult em = em_impute(masked, config.em(model));
      MethodOutcome out = fit_series(make_series(em.completed), fit_options);
      out.converged = out.converged && em.converged;
      return out;
    }
    case Method::kMiceDef:
    case Method::kMiceT: {
      const MiceVariant variant =
          method == Method::kMiceDef ? MiceVariant::kDef : MiceVariant::kLag1;
      const ImputationSet set = mice_chain(masked, config.mice(variant), mice_seed);
      std::vector<std::vector<ReportedParameter>> fits;
      bool converged = true;
      for (const auto& data : set.datasets) {
        MethodOutcome one = fit_series(make_series(data), fit_options);
        converged = converged && one.converged;
        fits.push_back(std::move(one.estimates));
      }
      const PooledFit pooled = rubin_pool(fits);
      MethodOutcome out;
      out.converged = converged;
      for (std::size_t i = 0; i < pooled.names.size(); ++i) {
        out.estimates.push_back({pooled.names[i], pooled.q_bar(static_cast<Eigen::Index>(i)),
                                 pooled.se(static_cast<Eigen::Index>(i))});
      }
      return out;
    }
  }
  throw std::logic_error("unhandled method");
}

void append_records(std::vector<FitRecord>& out, const FitRecord& base, const Dataset& data,
                    Method method, const std::vector<ReportedParameter>& truth,
                    const std::function<MethodOutcome()>& run) {
  FitRecord r = base;
  r.mechanism = data.mechanism;
  r.rate = data.rate;
  r.method = std::string(to_string(method));
  const auto start = Clock::now();
  try {
    const MethodOutcome outcome = run();
    r.wall_time = std::chrono::duration<double>(Clock::now() - start).count();
    for (std::size_t i = 0; i < truth.size(); ++i) {
      FitRecord p = r;
      p.parameter = truth[i].name;
      p.truth = truth[i].estimate;
      p.estimate = outcome.estimates.at(i).estimate;
      p.se = outcome.estimates.at(i).se;
      p.converged = outcome.converged;
      out.push_back(std::move(p));
    }
  } catch (const std::exception& e) {
    r.wall_time = std::chrono::duration<double>(Clock::now() - start).count();
    for (const auto& t : truth) {
      FitRecord p = r;
      p.parameter = t.name;
      p.truth = t.estimate;
      p.estimate = kNaN;
      p.se = kNaN;
      p.converged = false;
      p.error = e.what();
      out.push_back(std::move(p));
    }
  }
}

double json_number(const nlohmann::json& j) {
  return j.is_null() ? kNaN : j.get<double>();
}

}  // namespace

CalibrationTable calibrate_study(const StudyConfig& config, const std::vector<int>& cells) {
  CalibrationTable table;
  if (!config.calibrate) return table;
  bool masked_method = false;
  for (Method m : config.methods) masked_method |= m != Method::kComplete;
  if (!masked_method) return table;
  for (int cell : cells) {
    double s2 = 0.0, a = 0.0, g = 0.0;
    config.cell_levels(cell, s2, a, g);
    const ModelParams params = make_condition(s2, a, g);
    for (Mechanism mech : config.mechanisms) {
      if (mech == Mechanism::kMcar) continue;
      for (int ri = 0; ri < static_cast<int>(config.rates.size()); ++ri) {
        const MissingnessSpec base = paper_spec(mech, config.rates[ri]);
        const std::uint64_t seed =
            derive_seed(config.master_seed, static_cast<std::uint64_t>(cell), 0, Stage::kCalibrate,
                        static_cast<std::uint64_t>(mech) * 16 + static_cast<std::uint64_t>(ri));
        const Calibration cal = calibrate_intercept(mech, params, base.target_rate,
                                                    base.beta_slope, seed,
                                                    config.calibration_timepoints);
        MissingnessSpec spec = base;
        spec.beta0 = cal.beta0;
        spec.calibrated = true;
        table[{cell, mech, ri}] = spec;
      }
    }
  }
  return table;
}

MissingnessSpec study_spec(const StudyConfig& config, const CalibrationTable& table, int cell,
                           Mechanism mechanism, int rate_index) {
  const auto it = table.find({cell, mechanism, rate_index});
  if (it != table.end()) return it->second;
  return paper_spec(mechanism, config.rates.at(static_cast<std::size_t>(rate_index)));
}

std::vector<FitRecord> run_replication(const StudyConfig& config,
                                       const CalibrationTable& calibration, int cell,
                                       int rep) {
  const FitRecord base = base_record(config, cell, rep);
  const ModelParams params = make_condition(base.sigma2, base.alpha, base.gamma);
  const auto truth = reported_truth(params, config.fit_free_gamma21);
  const auto ucell = static_cast<std::uint64_t>(cell);
  const auto urep = static_cast<std::uint64_t>(rep);
  const MaskedSeries raw = simulate(params, config.timepoints,
                                    derive_seed(config.master_seed, ucell, urep, Stage::kSimulate),
                                    config.burn_in);

  std::vector<FitRecord> out;
  const bool has_complete =
      std::find(config.methods.begin(), config.methods.end(), Method::kComplete) !=
      config.methods.end();
  if (has_complete) {
    append_records(out, base, {kCompleteMechanism, 0.0}, Method::kComplete, truth,
                   [&] { return run_method(Method::kComplete, raw, config, 0); });
  }
  for (std::size_t mi = 0; mi < config.mechanisms.size(); ++mi) {
    const Mechanism mech = config.mechanisms[mi];
    for (std::size_t ri = 0; ri < config.rates.size(); ++ri) {
      const std::uint64_t dataset = static_cast<std::uint64_t>(mech) * 16 + ri;
      std::optional<MaskedSeries> masked;
      std::string mask_error;
      try {
        const MissingnessSpec spec =
            study_spec(config, calibration, cell, mech, static_cast<int>(ri));
        masked = apply_missingness(
            raw, spec,
            derive_seed(config.master_seed, ucell, urep, Stage::kMissingness, dataset));
      } catch (const std::exception& e) {
        mask_error = e.what();
      }
      const Dataset data{std::string(to_string(mech)), config.rates[ri]};
      for (Method method : config.methods) {
        if (method == Method::kComplete) continue;
        const std::uint64_t mice_seed =
            derive_seed(config.master_seed, ucell, urep, Stage::kMice,
                        dataset * 8 + static_cast<std::uint64_t>(method));
        append_records(out, base, data, method, truth, [&]() -> MethodOutcome {
          if (!masked) throw std::runtime_error("missingness: " + mask_error);
          return run_method(method, *masked, config, mice_seed);
        });
      }
    }
  }
  return out;
}

std::vector<int> parse_cell_filter(const std::string& text, int cell_count) {
  std::set<int> cells;
  std::stringstream ss(text);
  std::string part;
  auto parse_int = [&](const std::string& s) {
    std::size_t pos = 0;
    int v = 0;
    try {
      v = std::stoi(s, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != s.size() || s.empty()) throw std::invalid_argument("bad cell filter '" + text + "'");
    if (v < 0 || v >= cell_count) {
      throw std::invalid_argument("cell " + s + " outside 0.." + std::to_string(cell_count - 1));
    }
    return v;
  };
  while (std::getline(ss, part, ',')) {
    if (part.empty()) continue;
    const auto dash = part.find('-');
    if (dash == std::string::npos) {
      cells.insert(parse_int(part));
    } else {
      const int lo = parse_int(part.substr(0, dash));
      const int hi = parse_int(part.substr(dash + 1));
      if (hi < lo) throw std::invalid_argument("bad cell range '" + part + "'");
      for (int c = lo; c <= hi; ++c) cells.insert(c);
    }
  }
  if (cells.empty()) throw std::invalid_argument("empty cell filter");
  return {cells.begin(), cells.end()};
}

std::string record_to_json(const FitRecord& r) {
  nlohmann::ordered_json j;
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(); };
  j["cell"] = r.cell;
  j["sigma2"] = r.sigma2;
  j["alpha"] = r.alpha;
  j["gamma"] = r.gamma;
  j["lambda2"] = 1.0 - r.sigma2;
  j["mechanism"] = r.mechanism;
  j["rate"] = r.rate;
  j["replication"] = r.replication;
  j["method"] = r.method;
  j["parameter"] = r.parameter;
  j["truth"] = r.truth;
  j["estimate"] = num(r.estimate);
  j["se"] = num(r.se);
  j["converged"] = r.converged;
  if (!r.error.empty()) j["error"] = r.error;
  return j.dump();
}

FitRecord record_from_json(const std::string& line) {
  const auto j = nlohmann::json::parse(line);
  FitRecord r;
  r.cell = j.at("cell").get<int>();
  r.sigma2 = j.at("sigma2").get<double>();
  r.alpha = j.at("alpha").get<double>();
  r.gamma = j.at("gamma").get<double>();
  r.mechanism = j.at("mechanism").get<std::string>();
  r.rate = j.at("rate").get<double>();
  r.replication = j.at("replication").get<int>();
  r.method = j.at("method").get<std::string>();
  r.parameter = j.at("parameter").get<std::string>();
  r.truth = j.at("truth").get<double>();
  r.estimate = json_number(j.at("estimate"));
  r.se = json_number(j.at("se"));
  r.converged = j.at("converged").get<bool>();
  if (j.contains("error")) r.error = j.at("error").get<std::string>();
  return r;
}

std::vector<FitRecord> read_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open records file '" + path.string() + "'");
  std::vector<FitRecord> out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(record_from_json(line));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

RunSummary run_study(const StudyConfig& config_in, const RunOptions& options) {
  StudyConfig config = config_in;
  if (options.replications) config.replications = *options.replications;
  validate(config);
  auto log = [&](const std::string& msg) {
    if (options.log) options.log(msg);
  };

  std::vector<int> cells = options.cells;
  if (cells.empty()) {
    for (int c = 0; c < config.cell_count(); ++c) cells.push_back(c);
  }
  for (int c : cells) {
    if (c < 0 || c >= config.cell_count()) throw std::out_of_range("cell index out of range");
  }

  namespace fs = std::filesystem;
  const fs::path dir(config.output_dir);
  fs::create_directories(dir);
  const fs::path records_path = dir / "records.ndjson";
  const fs::path timings_path = dir / "timings.ndjson";
  const fs::path checkpoint_path = dir / "checkpoint.txt";
  const fs::path config_path = dir / "config.yaml";

  // Neither the thread count nor the replication count affects any single
  // replication, so both may change between a run and its resumption.
  StudyConfig comparable = config;
  comparable.threads = 0;
  comparable.replications = 1;
  std::set<std::pair<int, int>> done;
  if (options.resume && fs::exists(config_path)) {
    StudyConfig previous = load_config(config_path);
    previous.threads = 0;
    previous.replications = 1;
    if (!(previous == comparable)) {
      throw ConfigError("cannot resume: configuration differs from " + config_path.string());
    }
    std::ifstream ck(checkpoint_path);
    int c = 0, r = 0;
    while (ck >> c >> r) done.insert({c, r});
  }
  {
    std::ofstream cfg(config_path, std::ios::trunc);
    cfg << echo_config(config);
  }

  // Keep only lines of completed items; anything after the last checkpoint
  // belongs to an interrupted item.
  auto filter_lines = [&](const fs::path& path) {
    std::vector<std::string> keep;
    if (options.resume && fs::exists(path)) {
      std::ifstream in(path);
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains("cell") || !j.contains("replication")) continue;
        if (done.count({j["cell"].get<int>(), j["replication"].get<int>()})) keep.push_back(line);
      }
    }
    std::ofstream out(path, std::ios::trunc);
    for (const auto& l : keep) out << l << '\n';
  };
  filter_lines(records_path);
  filter_lines(timings_path);
  {
    std::ofstream ck(checkpoint_path, std::ios::trunc);
    for (const auto& [c, r] : done) ck << c << ' ' << r << '\n';
  }

  std::vector<std::pair<int, int>> items;
  for (int c : cells) {
    for (int r = 0; r < config.replications; ++r) {
      if (!done.count({c, r})) items.push_back({c, r});
    }
  }
  RunSummary summary;
  summary.records_path = records_path;
  summary.items_total = static_cast<int>(cells.size()) * config.replications;
  summary.items_skipped = summary.items_total - static_cast<int>(items.size());

  log("calibrating missingness intercepts");
  const CalibrationTable calibration = calibrate_study(config, cells);

  const int workers =
      std::max(1, std::min(resolve_threads(config), static_cast<int>(items.size())));
  log("running " + std::to_string(items.size()) + " work items on " +
      std::to_string(workers) + " worker(s)");

  std::mutex mu;
  std::condition_variable cv;
  std::map<std::size_t, std::vector<FitRecord>> ready;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort{false};

  auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= items.size() || abort) return;
      std::vector<FitRecord> recs;
      try {
        recs = run_replication(config, calibration, items[i].first, items[i].second);
      } catch (const std::exception& e) {
        FitRecord r = base_record(config, items[i].first, items[i].second);
        r.estimate = kNaN;
        r.se = kNaN;
        r.error = e.what();
        recs.push_back(std::move(r));
      }
      {
        std::lock_guard<std::mutex> lock(mu);
        ready.emplace(i, std::move(recs));
      }
      cv.notify_all();
    }
  };
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) pool.emplace_back(work);

  std::ofstream records(records_path, std::ios::app);
  std::ofstream timings(timings_path, std::ios::app);
  std::ofstream checkpoint(checkpoint_path, std::ios::app);
  try {
    for (std::size_t i = 0; i < items.size(); ++i) {
      std::vector<FitRecord> recs;
      {
        std::unique_lock<std::mutex> lock(mu);
        cv.wait(lock, [&] { return ready.count(i) > 0; });
        recs = std::move(ready[i]);
        ready.erase(i);
      }
      std::string last_group;
      for (const auto& r : recs) {
        records << record_to_json(r) << '\n';
        if (!r.error.empty()) ++summary.failure_records;
        const std::string group = r.mechanism + "|" + std::to_string(r.rate) + "|" + r.method;
        if (group != last_group) {
          nlohmann::ordered_json t;
          t["cell"] = r.cell;
          t["replication"] = r.replication;
          t["mechanism"] = r.mechanism;
          t["rate"] = r.rate;
          t["method"] = r.method;
          t["wall_time"] = r.wall_time;
          timings << t.dump() << '\n';
          last_group = group;
        }
      }
      records.flush();
      timings.flush();
      checkpoint << items[i].first << ' ' << items[i].second << '\n';
      checkpoint.flush();
      ++summary.items_run;
      if ((i + 1) % 10 == 0 || i + 1 == items.size()) {
        log("completed " + std::to_string(i + 1) + "/" + std::to_string(items.size()));
      }
    }
  } catch (...) {
    abort = true;
    for (auto& t : pool) t.join();
    throw;
  }
  for (auto& t : pool) t.join();
  return summary;
}

}  // namespace ssmiss
