#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "ssmiss/config.hpp"
#include "ssmiss/missingness.hpp"
#include "ssmiss/report.hpp"
#include "ssmiss/rng.hpp"
#include "ssmiss/study.hpp"

namespace fs = std::filesystem;
using namespace ssmiss;

namespace {

ReportOptions report_options_for(const fs::path& dir, double cutoff, bool exclude) {
  ReportOptions opts;
  if (fs::exists(dir / "config.yaml")) {
    const StudyConfig cfg = load_config(dir / "config.yaml");
    opts.outlier_cutoff = cfg.outlier_cutoff;
    opts.exclude_nonconverged = cfg.exclude_nonconverged;
  }
  if (cutoff > 0.0) opts.outlier_cutoff = cutoff;
  if (exclude) opts.exclude_nonconverged = true;
  return opts;
}

void print_written(const std::vector<fs::path>& paths) {
  for (const auto& p : paths) std::cout << p.string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"State-space missing-data simulation study"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run the Monte Carlo grid");
  std::string config_path;
  std::string cells;
  int reps = 0;
  int threads = 0;
  bool resume = false;
  bool no_report = false;
  run->add_option("--config", config_path, "YAML study configuration")->required();
  run->add_option("--cells", cells, "Cell indices, e.g. 0,3,5-7");
  run->add_option("--reps", reps, "Override the number of replications")->check(CLI::PositiveNumber);
  run->add_option("--threads", threads, "Worker threads (overrides config and SSMISS_THREADS)")
      ->check(CLI::NonNegativeNumber);
  run->add_flag("--resume", resume, "Continue from the checkpoint in the output directory");
  run->add_flag("--no-report", no_report, "Skip tables and plots after the run");

  auto* tables = app.add_subcommand("tables", "Write summary tables from a records directory");
  std::string records_dir;
  std::string out_dir;
  double cutoff = 0.0;
  bool exclude = false;
  tables->add_option("--records", records_dir, "Directory holding records.ndjson")->required();
  tables->add_option("--out", out_dir, "Output directory (default: the records directory)");
  tables->add_option("--outlier-cutoff", cutoff, "Absolute bias above which estimates are dropped");
  tables->add_flag("--exclude-nonconverged", exclude, "Drop fits that did not converge");

  auto* plots = app.add_subcommand("plots", "Write SVG box plots from a records directory");
  plots->add_option("--records", records_dir, "Directory holding records.ndjson")->required();
  plots->add_option("--out", out_dir, "Output directory (default: <records>/plots)");

  auto* calibrate = app.add_subcommand("calibrate", "Calibrate a mechanism's intercept");
  std::string mechanism;
  double rate = 0.15;
  double sigma2 = 0.25;
  double alpha = 0.7;
  double gamma = 0.0;
  std::uint64_t seed = 1;
  int timepoints = kCalibrationTimepoints;
  calibrate->add_option("--mechanism", mechanism, "MAR, TMAR, ATMAR or MNAR")->required();
  calibrate->add_option("--rate", rate, "Target missingness rate")->required();
  calibrate->add_option("--sigma2", sigma2, "Measurement error variance of the condition");
  calibrate->add_option("--alpha", alpha, "Autoregression of the condition");
  calibrate->add_option("--gamma", gamma, "Cross-lag of the condition");
  calibrate->add_option("--seed", seed, "Seed of the simulated drivers");
  calibrate->add_option("--timepoints", timepoints, "Length of the simulated driver series");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      StudyConfig config = load_config(config_path);
      if (threads > 0) config.threads = threads;
      RunOptions opts;
      if (!cells.empty()) opts.cells = parse_cell_filter(cells, config.cell_count());
      if (reps > 0) opts.replications = reps;
      opts.resume = resume;
      opts.log = [](const std::string& msg) { std::cerr << msg << '\n'; };
      const RunSummary s = run_study(config, opts);
      std::cerr << "items run " << s.items_run << ", skipped " << s.items_skipped
                << ", failure records " << s.failure_records << '\n';
      if (!no_report) {
        const auto records = read_records(s.records_path);
        ReportOptions ro;
        ro.outlier_cutoff = config.outlier_cutoff;
        ro.exclude_nonconverged = config.exclude_nonconverged;
        const fs::path dir(config.output_dir);
        print_written(emit_tables(records, dir / "tables", ro));
        print_written(emit_plots(records, dir / "plots"));
      }
    } else if (*tables) {
      const fs::path dir(records_dir);
      const auto records = read_records(dir / "records.ndjson");
      print_written(emit_tables(records, out_dir.empty() ? dir : fs::path(out_dir),
                                report_options_for(dir, cutoff, exclude)));
    } else if (*plots) {
      const fs::path dir(records_dir);
      const auto records = read_records(dir / "records.ndjson");
      print_written(emit_plots(records, out_dir.empty() ? dir / "plots" : fs::path(out_dir)));
    } else if (*calibrate) {
      const Mechanism mech = parse_mechanism(mechanism);
      if (mech == Mechanism::kMcar) {
        std::cout << "MCAR masks exactly round(rate * T) rows; nothing to calibrate\n";
        return 0;
      }
      const ModelParams params = make_condition(sigma2, alpha, gamma);
      const MissingnessSpec published = paper_spec(mech, rate);
      const Calibration cal =
          calibrate_intercept(mech, params, rate, published.beta_slope, seed, timepoints);
      std::cout << "mechanism " << to_string(mech) << "\n"
                << "target_rate " << rate << "\n"
                << "slope " << published.beta_slope << "\n"
                << "published_intercept " << published.beta0 << "\n"
                << "calibrated_intercept " << cal.beta0 << "\n"
                << "achieved_rate " << cal.achieved_rate << "\n"
                << "iterations " << cal.iterations << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
