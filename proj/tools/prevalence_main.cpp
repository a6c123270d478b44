// Copyright 2026 The prevalence toolkit authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "prevalence/alerting.hpp"
#include "prevalence/dates.hpp"
#include "prevalence/formats.hpp"
#include "prevalence/numeric.hpp"
#include "prevalence/pipeline.hpp"
#include "prevalence/simlab.hpp"

namespace {

using namespace prevalence;

// Exit codes: 0 ok, 2 config, 3 gate, 4 ingestion, 5 estimation, 6 io, 1 other.
int exit_code_for(Errc code) {
  switch (code) {
    case Errc::invalid_config:
      return 2;
    case Errc::gate_failed:
      return 3;
    case Errc::ingestion:
      return 4;
    case Errc::estimation:
    case Errc::segment_empty:
    case Errc::insufficient_data:
      return 5;
    case Errc::io:
      return 6;
    case Errc::invalid_argument:
      return 1;
  }
  return 1;
}

int cmd_validate(const std::string& config_path) {
  const MetricConfig config = load_metric_config(config_path);
  const auto problems = validate_config(config);
  if (problems.empty()) {
    std::cout << "config ok (hash " << config.config_hash << ")\n";
    return 0;
  }
  std::cerr << "config invalid:\n";
  for (const auto& p : problems) std::cerr << "  " << p << "\n";
  return 2;
}

int cmd_run(const std::string& config_path, const std::string& day) {
  const MetricConfig config = load_metric_config(config_path);
  const RunResult result = run_daily(config, day);
  for (const auto& r : result.estimates) std::cout << to_json(r).dump() << "\n";
  std::cerr << "run " << config.policy_id << "/" << day << ": " << result.estimates.size()
            << " estimates, sample " << result.lineage.header.sample_id << ", lineage at "
            << result.lineage.run_dir.string() << "\n";
  if (!result.lineage.empty_segments.empty()) {
    std::cerr << "segments with insufficient sample:";
    for (const auto& s : result.lineage.empty_segments) std::cerr << " " << s;
    std::cerr << "\n";
  }
  if (result.alert) {
    const char* name = result.alert->outcome == AlertDecision::Outcome::fire    ? "fire"
                       : result.alert->outcome == AlertDecision::Outcome::quiet ? "quiet"
                                                                                : "no_decision";
    std::cerr << "alert: " << name << " (delta " << result.alert->delta << ", threshold "
              << result.alert->threshold << ")\n";
  }
  return 0;
}

int cmd_simulate(const simlab::SimPopulationSpec& pop_spec, simlab::SimExperimentSpec exp_spec,
                 const std::string& figure_out, bool ppswor_compare, std::uint64_t ppswor_m,
                 std::uint32_t ppswor_trials) {
  const auto population = simlab::generate_population(pop_spec);
  std::cerr << "population: " << population.units.size() << " units, true theta "
            << population.true_theta() << "\n";
  const auto result = simlab::run_trials(population, exp_spec);
  for (const auto& cell : result.cells) {
    std::cout << "m=" << cell.m << " scheme=" << simlab::scheme_name(cell.scheme)
              << " width=" << cell.width << " width_rel=" << cell.width_rel
              << " bias=" << cell.bias << " positive_fraction=" << cell.mean_positive_fraction
              << "\n";
  }
  for (const auto& lift : simlab::positive_rate_lift(result)) {
    std::cout << "m=" << lift.m << " positive_rate_lift=" << lift.lift;
    if (lift.excluded_pps_trials > 0)
      std::cout << " (excluded " << lift.excluded_pps_trials << " zero-positive pps trials)";
    std::cout << "\n";
  }
  if (!figure_out.empty()) {
    simlab::emit_figure_data(result, figure_out);
    std::cerr << "figure data written to " << figure_out << "\n";
  }
  if (ppswor_compare) {
    const auto wor = simlab::run_ppswor_trials(population, ppswor_m, ppswor_trials,
                                               simlab::SimScheme::ml_pps, exp_spec);
    double mean = numeric::compensated_total(wor) / static_cast<double>(wor.size());
    std::cout << "ppswor m=" << ppswor_m << " trials=" << ppswor_trials << " mean_estimate=" << mean
              << " (truth " << population.true_theta() << ")\n";
  }
  return 0;
}

int cmd_alert(const std::string& series_path, double alpha, double power, double baseline,
              int gap_days, double sigma_override, bool inflate) {
  std::vector<DayPoint> points;
  for (const json& j : read_jsonl(series_path)) {
    EstimateRecord r = estimate_record_from_json(j);
    if (r.segment != kAllSegment) continue;
    points.push_back(DayPoint{parse_day(r.day), r.estimate.theta_hat, r.estimate.variance});
  }
  DailySeries series(std::move(points));
  if (series.empty()) throw Error(Errc::insufficient_data, "series has no ALL-segment records");

  double sigma = sigma_override;
  if (!(sigma > 0.0)) {
    numeric::CompensatedSum var_sum;
    for (const auto& p : series.points()) var_sum.add(p.variance);
    sigma = std::sqrt(var_sum.value() / static_cast<double>(series.size()));
  }
  double inflation = 1.0;
  if (inflate) {
    const auto rho = estimate_autocorrelation(series);
    inflation = variance_inflation(rho);
  }

  MdePlan plan;
  plan.alpha = alpha;
  plan.power = power;
  plan.baseline = baseline;
  plan.mde_abs = mde_absolute(sigma * std::sqrt(inflation), alpha, power);
  plan.mde_rel = baseline > 0.0 ? plan.mde_abs / baseline : 0.0;

  const AlertDecision d = evaluate_alert(series, plan, gap_days);
  json out;
  out["decision"] = d.outcome == AlertDecision::Outcome::fire    ? "fire"
                    : d.outcome == AlertDecision::Outcome::quiet ? "quiet"
                                                                 : "no_decision";
  out["delta"] = d.delta;
  out["mde_abs"] = plan.mde_abs;
  out["mde_rel"] = plan.mde_rel;
  out["mean_recent"] = d.mean_recent;
  out["mean_previous"] = d.mean_previous;
  out["window_recent_end"] = format_day(d.recent_end_day);
  out["window_previous_end"] = format_day(d.previous_end_day);
  out["sigma"] = sigma;
  out["inflation"] = inflation;
  json missing = json::array();
  for (int day : d.missing_days) missing.push_back(format_day(day));
  out["missing_days"] = missing;
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_compare_scores(const std::string& config_path, const std::string& day,
                       const std::string& scores_a, const std::string& scores_b, double z,
                       bool include_unweighted) {
  const MetricConfig config = load_metric_config(config_path);
  const ScoreComparison cmp =
      compare_score_versions(config, day, scores_a, scores_b, z, include_unweighted);
  json out;
  out["theta_a"] = cmp.estimate_a.estimate.theta_hat;
  out["theta_b"] = cmp.estimate_b.estimate.theta_hat;
  out["delta"] = cmp.delta;
  out["combined_se"] = cmp.combined_se;
  out["z"] = cmp.z;
  out["agree"] = cmp.agree;
  out["ci_width_a"] = cmp.ci_width_a;
  out["ci_width_b"] = cmp.ci_width_b;
  if (cmp.estimate_unweighted)
    out["theta_unweighted"] = cmp.estimate_unweighted->estimate.theta_hat;
  std::cout << out.dump(2) << "\n";
  // CI width is where score-version changes are expected to land; point
  // disagreement is the actionable signal.
  return cmp.agree ? 0 : 5;
}

int cmd_emit_dashboard(const std::vector<std::string>& estimate_files, const std::string& out_dir) {
  std::vector<EstimateRecord> records;
  for (const auto& path : estimate_files) {
    for (const json& j : read_jsonl(path)) records.push_back(estimate_record_from_json(j));
  }
  emit_dashboard_data(records, out_dir);
  std::cerr << "dashboard data written to " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Design-consistent prevalence measurement toolkit"};
  app.require_subcommand(1);

  std::string config_path, day, figure_out, series_path, scores_a, scores_b, out_dir;
  std::vector<std::string> estimate_files;

  auto* validate = app.add_subcommand("validate", "Validate a metric config");
  validate->add_option("--config", config_path, "Metric config JSON")->required();

  auto* run = app.add_subcommand("run", "Run one (policy, day) measurement");
  run->add_option("--config", config_path, "Metric config JSON")->required();
  run->add_option("--day", day, "Day to run, YYYY-MM-DD")->required();

  simlab::SimPopulationSpec pop_spec;
  simlab::SimExperimentSpec exp_spec;
  bool paired = false;
  bool ppswor_compare = false;
  std::uint64_t ppswor_m = 10000;
  std::uint32_t ppswor_trials = 100;
  auto* simulate = app.add_subcommand("simulate", "Run the sampling-efficiency simulation lab");
  simulate->add_option("--population-size", pop_spec.n, "Population size");
  simulate->add_option("--base-rate", pop_spec.base_rate, "Base positive rate");
  simulate->add_option("--p-small", pop_spec.p_small, "Mass of the small impression component");
  simulate->add_option("--pareto-alpha", pop_spec.pareto_alpha, "Impression tail index");
  simulate->add_option("--pareto-xm", pop_spec.pareto_xm, "Impression tail scale");
  simulate->add_option("--beta-neg-a", pop_spec.beta_neg_a, "Score Beta a (negatives)");
  simulate->add_option("--beta-neg-b", pop_spec.beta_neg_b, "Score Beta b (negatives)");
  simulate->add_option("--beta-pos-a", pop_spec.beta_pos_a, "Score Beta a (positives)");
  simulate->add_option("--beta-pos-b", pop_spec.beta_pos_b, "Score Beta b (positives)");
  simulate->add_option("--seed-pop", pop_spec.seed_pop, "Population generation seed");
  simulate->add_option("--sample-sizes", exp_spec.sample_sizes, "Sample sizes to sweep");
  simulate->add_option("--trials", exp_spec.trials, "Monte Carlo trials per cell");
  simulate->add_option("--impression-exponent", exp_spec.impression_exponent, "nu");
  simulate->add_option("--score-exponent", exp_spec.score_exponent, "gamma for ml_pps");
  simulate->add_option("--score-floor", exp_spec.score_floor, "Additive score floor");
  simulate->add_option("--seed-mc", exp_spec.seed_mc, "Monte Carlo seed");
  simulate->add_flag("--paired", paired, "Share per-trial randomness across schemes");
  simulate->add_option("--figure-out", figure_out, "Write figure data CSV here");
  simulate->add_flag("--ppswor-compare", ppswor_compare,
                     "Also run reservoir (PPSWOR) trials for the design comparison");
  simulate->add_option("--ppswor-m", ppswor_m, "PPSWOR comparison sample size");
  simulate->add_option("--ppswor-trials", ppswor_trials, "PPSWOR comparison trials");

  double alpha = 0.05, power = 0.8, baseline = 0.0, sigma_override = 0.0, z = 1.96;
  int gap_days = 0;
  bool inflate = false, include_unweighted = false;
  auto* alert = app.add_subcommand("alert", "Evaluate the weekly alert rule on a series file");
  alert->add_option("--series", series_path, "Estimates JSONL (ALL-segment rows)")->required();
  alert->add_option("--alpha", alpha, "Two-sided test level");
  alert->add_option("--power", power, "Test power");
  alert->add_option("--baseline", baseline, "Baseline theta_0 for relative MDE");
  alert->add_option("--gap-days", gap_days, "Days between the two 7-day windows");
  alert->add_option("--sigma", sigma_override, "Daily sigma (default: from series variances)");
  alert->add_flag("--inflate", inflate, "Apply autocorrelation variance inflation");

  auto* compare = app.add_subcommand("compare-scores", "Score-version consistency check");
  compare->add_option("--config", config_path, "Metric config JSON")->required();
  compare->add_option("--day", day, "Day, YYYY-MM-DD")->required();
  compare->add_option("--scores-a", scores_a, "Score file A")->required();
  compare->add_option("--scores-b", scores_b, "Score file B")->required();
  compare->add_option("--z", z, "Agreement z threshold");
  compare->add_flag("--include-unweighted", include_unweighted, "Also run with score exponent 0");

  auto* dashboard = app.add_subcommand("emit-dashboard", "Emit plot-ready dashboard files");
  dashboard->add_option("--estimates", estimate_files, "Estimate JSONL files")->required();
  dashboard->add_option("--out", out_dir, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (validate->parsed()) return cmd_validate(config_path);
    if (run->parsed()) return cmd_run(config_path, day);
    if (simulate->parsed()) {
      exp_spec.paired = paired;
      return cmd_simulate(pop_spec, exp_spec, figure_out, ppswor_compare, ppswor_m, ppswor_trials);
    }
    if (alert->parsed())
      return cmd_alert(series_path, alpha, power, baseline, gap_days, sigma_override, inflate);
    if (compare->parsed())
      return cmd_compare_scores(config_path, day, scores_a, scores_b, z, include_unweighted);
    if (dashboard->parsed()) return cmd_emit_dashboard(estimate_files, out_dir);
  } catch (const MissingLabelsError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(Errc::ingestion);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
