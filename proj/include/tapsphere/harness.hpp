#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "tapsphere/io.hpp"
#include "tapsphere/model.hpp"
#include "tapsphere/oracle.hpp"
#include "tapsphere/sampler.hpp"
#include "tapsphere/spectra.hpp"
#include "tapsphere/tap.hpp"

namespace tapsphere {

inline constexpr const char* kCodeVersion = "tapsphere 0.1.0";

enum class ExperimentName {
  theorem1_gap,
  band_decomposition,
  overlap_concentration,
  annealed_checks,
  restricted_profile,
  onsager_gap,
  spectra_report,
};

inline const char* to_string(ExperimentName e) {
  switch (e) {
    case ExperimentName::theorem1_gap: return "theorem1-gap";
    case ExperimentName::band_decomposition: return "band-decomposition";
    case ExperimentName::overlap_concentration: return "overlap-concentration";
    case ExperimentName::annealed_checks: return "annealed-checks";
    case ExperimentName::restricted_profile: return "restricted-profile";
    case ExperimentName::onsager_gap: return "onsager-gap";
    case ExperimentName::spectra_report: return "spectra-report";
  }
  return "?";
}

inline ExperimentName parse_experiment_name(const std::string& s) {
  for (ExperimentName e :
       {ExperimentName::theorem1_gap, ExperimentName::band_decomposition,
        ExperimentName::overlap_concentration, ExperimentName::annealed_checks,
        ExperimentName::restricted_profile, ExperimentName::onsager_gap,
        ExperimentName::spectra_report}) {
    if (s == to_string(e)) return e;
  }
  throw std::invalid_argument("unknown experiment name: " + s);
}

enum class OutputFormat { csv, json };

struct ExperimentKnobs {
  long ez_mc_draws = 10000;
  long chain_steps = 6000;
  long chain_burn_in = 1500;
  int chain_thin = 2;
  int chains = 4;
  double target_accept = 0.4;
  int disorder_draws = 8;
  int lambda0_draws = 8;
  double band_eps = 0.05;
  long band_samples = 400000;
  int tap_grid = 512;
  int profile_points = 401;
};

// Default grid: the high-temperature flag holds at every (delta, alpha) cell
// and a full theorem1-gap run completes in minutes on one core.
struct ExperimentSpec {
  ExperimentName name = ExperimentName::theorem1_gap;
  std::vector<int> p_list = {100, 200, 400};
  std::vector<double> delta_list = {5.0, 10.0, 20.0};
  std::vector<double> alpha_list = {1.0, 2.0, 4.0};
  std::vector<std::uint64_t> seeds = {1,  2,  3,  4,  5,  6,  7,  8,  9,  10,
                                      11, 12, 13, 14, 15, 16, 17, 18, 19, 20};
  int workers = 1;
  std::string output_path;
  OutputFormat format = OutputFormat::csv;
  ExperimentKnobs knobs;

  // band rejection sampling is workable only up to p ~ 150, the
  // concentration sweep is quoted on the doubling sequence {50, 100, 200},
  // and the annealed checks pair closed forms with a small-p disorder MC
  static std::vector<int> default_p_list(ExperimentName name) {
    switch (name) {
      case ExperimentName::band_decomposition: return {60, 100, 140};
      case ExperimentName::overlap_concentration: return {50, 100, 200};
      case ExperimentName::annealed_checks: return {15, 50, 100, 200, 400};
      default: return {100, 200, 400};
    }
  }
};

struct ResultTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  std::string to_csv() const {
    std::string out;
    for (size_t i = 0; i < columns.size(); ++i) {
      if (i) out += ',';
      out += columns[i];
    }
    out += '\n';
    for (const auto& row : rows) {
      for (size_t i = 0; i < row.size(); ++i) {
        if (i) out += ',';
        out += row[i];
      }
      out += '\n';
    }
    return out;
  }

  // Mirrors the CSV rows 1:1; all cells kept as their CSV text.
  std::string to_json() const {
    std::string out = "{\"columns\":[";
    for (size_t i = 0; i < columns.size(); ++i) {
      if (i) out += ',';
      out += '"' + columns[i] + '"';
    }
    out += "],\"rows\":[";
    for (size_t r = 0; r < rows.size(); ++r) {
      if (r) out += ',';
      out += '[';
      for (size_t i = 0; i < rows[r].size(); ++i) {
        if (i) out += ',';
        out += '"' + rows[r][i] + '"';
      }
      out += ']';
    }
    out += "]}";
    return out;
  }
};

struct RunManifest {
  std::string experiment;
  std::string code_version = kCodeVersion;
  std::vector<std::uint64_t> task_seeds;
  double wall_time_sec = 0.0;
  std::uint64_t results_digest = 0;
};

struct RunOutcome {
  ResultTable table;
  RunManifest manifest;
  std::string payload;  // exact bytes the digest covers
  int failures = 0;
  int exit_code = 0;
};

inline std::uint64_t digest_bytes(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace detail {

struct Cell {
  int p = 0;
  int n = 0;
  double delta = 0.0;
  double alpha = 0.0;
  std::uint64_t seed = 0;
};

// Stream key depends only on (experiment, cell, seed) so results are
// independent of worker count and scheduling order.
inline std::uint64_t task_key(ExperimentName name, const Cell& c) {
  std::string tag = std::string(to_string(name)) + "|" + std::to_string(c.p) + "|" +
                    std::to_string(c.n) + "|" + format_real(c.delta) + "|" +
                    std::to_string(c.seed);
  return fnv1a64(tag);
}

using TaskFn = std::function<std::vector<std::vector<std::string>>()>;

struct Task {
  Cell cell;
  TaskFn fn;
};

struct TaskResult {
  bool ok = false;
  std::string error;
  std::vector<std::vector<std::string>> rows;
};

// Workers pull tasks from a shared counter; the caller is the single writer
// and sees each result exactly once, in task-id order, as soon as the
// completed prefix advances. Killing the process mid-run therefore loses
// only tasks past the last flushed prefix.
inline std::vector<TaskResult> run_tasks(
    const std::vector<Task>& tasks, int workers,
    const std::function<void(size_t, const TaskResult&)>& on_done_in_order) {
  std::vector<TaskResult> results(tasks.size());
  std::vector<char> done(tasks.size(), 0);
  std::atomic<size_t> next{0};
  std::mutex mu;
  std::condition_variable cv;

  auto worker = [&]() {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      TaskResult res;
      try {
        res.rows = tasks[i].fn();
        res.ok = true;
      } catch (const std::exception& e) {
        res.error = e.what();
      }
      {
        std::lock_guard<std::mutex> lock(mu);
        results[i] = std::move(res);
        done[i] = 1;
      }
      cv.notify_all();
    }
  };

  const int nw = std::max(1, std::min<int>(workers, static_cast<int>(tasks.size())));
  std::vector<std::thread> pool;
  pool.reserve(nw);
  for (int w = 0; w < nw; ++w) pool.emplace_back(worker);

  for (size_t i = 0; i < tasks.size(); ++i) {
    {
      std::unique_lock<std::mutex> lock(mu);
      cv.wait(lock, [&] { return done[i] != 0; });
    }
    // results[i] is write-once and published before done[i]
    if (on_done_in_order) on_done_in_order(i, results[i]);
  }
  for (auto& t : pool) t.join();
  return results;
}

inline std::vector<Cell> make_cells(const ExperimentSpec& spec) {
  std::vector<Cell> cells;
  for (int p : spec.p_list)
    for (double delta : spec.delta_list)
      for (double alpha : spec.alpha_list)
        for (std::uint64_t seed : spec.seeds) {
          Cell c;
          c.p = p;
          c.n = static_cast<int>(std::lround(alpha * p));
          c.delta = delta;
          c.alpha = alpha;
          c.seed = seed;
          cells.push_back(c);
        }
  return cells;
}

inline std::vector<std::string> provenance(const Cell& c) {
  return {std::to_string(c.p), std::to_string(c.n), format_real(c.delta), format_real(c.alpha),
          std::to_string(c.seed)};
}

inline double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  if (v.empty()) return 0.0;
  const double idx = q * (v.size() - 1);
  const size_t lo = static_cast<size_t>(idx);
  const size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (idx - lo) * (v[hi] - v[lo]);
}

}  // namespace detail

// |F_p - sup f_TAP| per (p, delta, seed), computed from one instance; the
// degenerate X = 0 case is flagged as out-of-model rather than rejected.
struct Theorem1GapRow {
  double f_p = 0.0;
  double sup_tap = 0.0;
  double gap = 0.0;
  bool out_of_model = false;
};

inline Theorem1GapRow theorem1_gap_row(const Instance& inst, double delta, int tap_grid = 512) {
  Theorem1GapRow row;
  row.out_of_model = inst.X.norm() == 0.0;
  row.f_p = log_partition_saddle(reduce_to_quadratic(inst, delta)).value;
  row.sup_tap = sup_tap_svd(inst, delta, tap_grid).value;
  row.gap = std::abs(row.f_p - row.sup_tap);
  return row;
}

inline RunOutcome run_experiment(const ExperimentSpec& spec_in) {
  ExperimentSpec spec = spec_in;
  if (const char* env = std::getenv("TAPSPHERE_WORKERS")) {
    const int w = std::atoi(env);
    if (w >= 1) spec.workers = w;
  }
  if (spec.p_list.empty() || spec.delta_list.empty() || spec.alpha_list.empty() ||
      spec.seeds.empty())
    throw std::invalid_argument("run_experiment: empty parameter ranges");
  if (spec.workers < 1) throw std::invalid_argument("run_experiment: workers must be >= 1");

  const auto t0 = std::chrono::steady_clock::now();
  RunOutcome out;
  ResultTable& table = out.table;
  std::vector<detail::Task> tasks;
  const ExperimentKnobs& kn = spec.knobs;

  // Per-experiment task builders; every row starts with (p, n, delta, alpha, seed).
  switch (spec.name) {
    case ExperimentName::theorem1_gap: {
      for (double delta : spec.delta_list)
        for (double alpha : spec.alpha_list) {
          const int p_probe = spec.p_list.front();
          const SecondMomentReport rep = annealed_second_moment(
              p_probe, static_cast<int>(std::lround(alpha * p_probe)), delta);
          if (!rep.high_temperature)
            throw std::invalid_argument(
                "theorem1-gap: spec is out of the high-temperature phase, C_Q = " +
                std::to_string(rep.cq));
        }
      table.columns = {"kind", "p",     "n",   "delta", "alpha",
                       "seed", "f_p",   "sup_tap", "gap", "status"};
      for (const auto& cell : detail::make_cells(spec)) {
        tasks.push_back({cell, [cell, kn]() {
          const Instance inst = generate_instance(
              ModelConfig(cell.p, cell.n, cell.delta, task_key(ExperimentName::theorem1_gap, cell)));
          const Theorem1GapRow r = theorem1_gap_row(inst, cell.delta, kn.tap_grid);
          std::vector<std::string> row = {"result"};
          for (auto& s : detail::provenance(cell)) row.push_back(s);
          row.push_back(format_real(r.f_p));
          row.push_back(format_real(r.sup_tap));
          row.push_back(format_real(r.gap));
          row.push_back(r.out_of_model ? "out-of-model" : "ok");
          return std::vector<std::vector<std::string>>{row};
        }});
      }
      break;
    }
    case ExperimentName::band_decomposition: {
      table.columns = {"kind", "p", "n", "delta", "alpha", "seed", "fit", "onsager", "volume",
                       "mc_value", "eps_band", "pass", "status"};
      for (const auto& cell : detail::make_cells(spec)) {
        tasks.push_back({cell, [cell, kn]() {
          const std::uint64_t key = task_key(ExperimentName::band_decomposition, cell);
          const Instance inst =
              generate_instance(ModelConfig(cell.p, cell.n, cell.delta, key));
          const TapOptimum opt = sup_tap_svd(inst, cell.delta, kn.tap_grid);
          const BandDecomposition bd = band_free_energy(inst, cell.delta, opt.a_star);
          // widen the band until the predicted yield supports the jackknife
          double eps = kn.band_eps;
          while (eps < 0.35 &&
                 kn.band_samples *
                         std::exp(band_box_log_volume(inst, opt.a_star, eps)) <
                     400.0)
            eps *= 2.0;
          RngStream rng = RngStream::seeded(key).split("band-mc");
          const BandMcReport mc =
              band_mc_check(inst, cell.delta, opt.a_star, eps, kn.band_samples, rng);
          std::vector<std::string> row = {"result"};
          for (auto& s : detail::provenance(cell)) row.push_back(s);
          row.push_back(format_real(bd.recentered_fit));
          row.push_back(format_real(bd.onsager_term));
          row.push_back(format_real(bd.volume_term));
          row.push_back(format_real(mc.mc_value));
          row.push_back(format_real(eps));
          row.push_back(mc.pass ? "1" : "0");
          row.push_back("ok");
          return std::vector<std::vector<std::string>>{row};
        }});
      }
      break;
    }
    case ExperimentName::overlap_concentration: {
      table.columns = {"kind", "p", "n", "delta", "alpha", "seed", "second_moment", "se",
                       "mean_r12", "status"};
      for (double delta : spec.delta_list)
        for (double alpha : spec.alpha_list)
          for (int p : spec.p_list) {
            detail::Cell cell;
            cell.p = p;
            cell.n = static_cast<int>(std::lround(alpha * p));
            cell.delta = delta;
            cell.alpha = alpha;
            cell.seed = spec.seeds.front();
            tasks.push_back({cell, [cell, kn]() {
              const ChainConfig ccfg(kn.chain_steps, kn.chain_burn_in, kn.chain_thin,
                                     kn.target_accept, 0.5, 0);
              const PerturbationConfig base(0.75, eps_p_schedule(cell.p),
                                            task_key(ExperimentName::overlap_concentration, cell));
              const auto rows = overlap_concentration_sweep(
                  cell.alpha, cell.delta, {cell.p}, base, ccfg, kn.disorder_draws,
                  kn.lambda0_draws, kn.chains);
              std::vector<std::string> row = {"result"};
              for (auto& s : detail::provenance(cell)) row.push_back(s);
              row.push_back(format_real(rows[0].second_moment));
              row.push_back(format_real(rows[0].se));
              row.push_back(format_real(rows[0].mean_r12));
              row.push_back("ok");
              return std::vector<std::vector<std::string>>{row};
            }});
          }
      break;
    }
    case ExperimentName::annealed_checks: {
      table.columns = {"kind", "p", "n", "delta", "alpha", "seed", "annealed_phi", "mc_phi",
                       "mc_se", "log_gamma0_over_p", "cq", "high_temperature", "status"};
      for (const auto& cell : detail::make_cells(spec)) {
        tasks.push_back({cell, [cell, kn]() {
          const SecondMomentReport rep = annealed_second_moment(cell.p, cell.n, cell.delta);
          std::vector<std::string> row = {"result"};
          for (auto& s : detail::provenance(cell)) row.push_back(s);
          row.push_back(format_real(rep.annealed_phi));
          // the brute disorder average is a small-p check; larger p keeps
          // the closed forms and the gamma0 trend only
          if (cell.p <= 50) {
            RngStream rng =
                RngStream::seeded(task_key(ExperimentName::annealed_checks, cell)).split("ez-mc");
            const auto [mc_phi, mc_se] =
                annealed_ez_mc(cell.p, cell.n, cell.delta, kn.ez_mc_draws, rng);
            row.push_back(format_real(mc_phi));
            row.push_back(format_real(mc_se));
          } else {
            row.push_back("");
            row.push_back("");
          }
          row.push_back(format_real(rep.log_gamma0_over_p));
          row.push_back(format_real(rep.cq));
          row.push_back(rep.high_temperature ? "1" : "0");
          row.push_back("ok");
          return std::vector<std::vector<std::string>>{row};
        }});
      }
      break;
    }
    case ExperimentName::restricted_profile: {
      table.columns = {"kind", "p", "n", "delta", "alpha", "seed", "delta_align", "f_p",
                       "status"};
      for (const auto& cell : detail::make_cells(spec)) {
        tasks.push_back({cell, [cell, kn]() {
          const Instance inst = generate_instance(ModelConfig(
              cell.p, cell.n, cell.delta, task_key(ExperimentName::restricted_profile, cell)));
          const RestrictedProfile profile(inst, cell.delta);
          std::vector<std::vector<std::string>> rows;
          double best_f = -1e300, best_d = 0.0;
          for (int i = 0; i < kn.profile_points; ++i) {
            const double d = -0.999 + 1.998 * i / (kn.profile_points - 1);
            const double f = profile(d);
            if (f > best_f) {
              best_f = f;
              best_d = d;
            }
            std::vector<std::string> row = {"result"};
            for (auto& s : detail::provenance(cell)) row.push_back(s);
            row.push_back(format_real(d));
            row.push_back(format_real(f));
            row.push_back("ok");
            rows.push_back(row);
          }
          std::vector<std::string> row = {"argmax"};
          for (auto& s : detail::provenance(cell)) row.push_back(s);
          row.push_back(format_real(best_d));
          row.push_back(format_real(best_f));
          row.push_back("ok");
          rows.push_back(row);
          return rows;
        }});
      }
      break;
    }
    case ExperimentName::onsager_gap: {
      table.columns = {"kind", "p", "n", "delta", "alpha", "seed", "gap", "onsager_at_optimum",
                       "s_star", "status"};
      for (const auto& cell : detail::make_cells(spec)) {
        tasks.push_back({cell, [cell, kn]() {
          const Instance inst = generate_instance(
              ModelConfig(cell.p, cell.n, cell.delta, task_key(ExperimentName::onsager_gap, cell)));
          const double gap = onsager_gap(inst, cell.delta, kn.tap_grid);
          const TapOptimum opt = sup_tap_svd(inst, cell.delta, kn.tap_grid);
          const double onsager_ref =
              -(cell.alpha / 2.0) * std::log1p((1.0 - opt.s_star) / (cell.delta * cell.alpha));
          std::vector<std::string> row = {"result"};
          for (auto& s : detail::provenance(cell)) row.push_back(s);
          row.push_back(format_real(gap));
          row.push_back(format_real(onsager_ref));
          row.push_back(format_real(opt.s_star));
          row.push_back("ok");
          return std::vector<std::vector<std::string>>{row};
        }});
      }
      break;
    }
    case ExperimentName::spectra_report: {
      table.columns = {"kind", "p", "n", "delta", "alpha", "seed", "sigma_max", "mp_ks",
                       "quantile_dev", "good_set", "status"};
      for (const auto& cell : detail::make_cells(spec)) {
        tasks.push_back({cell, [cell]() {
          const Instance inst = generate_instance(ModelConfig(
              cell.p, cell.n, cell.delta, task_key(ExperimentName::spectra_report, cell)));
          const SpectrumReport rep = mp_diagnostics(inst, cell.delta);
          std::vector<std::string> row = {"result"};
          for (auto& s : detail::provenance(cell)) row.push_back(s);
          row.push_back(format_real(rep.sigma_max));
          row.push_back(format_real(rep.mp_ks_distance));
          row.push_back(format_real(rep.quantile_deviation));
          row.push_back(rep.in_good_set ? "1" : "0");
          row.push_back("ok");
          return std::vector<std::vector<std::string>>{row};
        }});
      }
      break;
    }
  }

  // Single writer: completed results land in the table (and stream to the
  // CSV file when one was requested) in task-id order.
  std::ofstream stream_file;
  const bool streaming = !spec.output_path.empty() && spec.format == OutputFormat::csv;
  if (streaming) {
    stream_file.open(spec.output_path, std::ios::binary);
    if (!stream_file) throw std::runtime_error("cannot open for writing: " + spec.output_path);
    ResultTable header_only;
    header_only.columns = table.columns;
    stream_file << header_only.to_csv();
    stream_file.flush();
  }
  auto append_row = [&](const std::vector<std::string>& row) {
    table.rows.push_back(row);
    if (streaming) {
      for (size_t i = 0; i < row.size(); ++i) {
        if (i) stream_file << ',';
        stream_file << row[i];
      }
      stream_file << '\n';
    }
  };
  detail::run_tasks(tasks, spec.workers, [&](size_t i, const detail::TaskResult& res) {
    if (res.ok) {
      for (const auto& row : res.rows) append_row(row);
    } else {
      ++out.failures;
      std::vector<std::string> row = {"failure"};
      for (auto& s : detail::provenance(tasks[i].cell)) row.push_back(s);
      while (row.size() + 1 < table.columns.size()) row.push_back("");
      std::string msg = res.error;
      for (char& ch : msg)
        if (ch == ',' || ch == '\n') ch = ';';
      row.push_back("failed: " + msg);
      append_row(row);
    }
    if (streaming) stream_file.flush();
  });

  // trend verdict over the p sweep per (delta, alpha)
  if (spec.name == ExperimentName::overlap_concentration) {
    for (double delta : spec.delta_list)
      for (double alpha : spec.alpha_list) {
        std::vector<std::pair<int, double>> moments;
        for (const auto& row : table.rows) {
          if (row[0] != "result") continue;
          if (row[3] == format_real(delta) && row[4] == format_real(alpha))
            moments.emplace_back(std::atoi(row[1].c_str()),
                                 std::strtod(row[6].c_str(), nullptr));
        }
        std::sort(moments.begin(), moments.end());
        if (moments.size() < 2) continue;
        int inversions = 0;
        for (size_t i = 0; i + 1 < moments.size(); ++i)
          inversions += moments[i].second <= moments[i + 1].second;
        std::vector<std::string> row = {"summary",
                                        std::to_string(moments.front().first) + ".." +
                                            std::to_string(moments.back().first),
                                        "aggregate",
                                        format_real(delta),
                                        format_real(alpha),
                                        "aggregate",
                                        "",
                                        "",
                                        "",
                                        inversions == 0
                                            ? "trend-decreasing"
                                            : "trend-inversions:" + std::to_string(inversions)};
        table.rows.push_back(row);
      }
  }

  // summary rows: median and 90th-percentile gap per (p, delta, alpha)
  if (spec.name == ExperimentName::theorem1_gap) {
    for (int p : spec.p_list)
      for (double delta : spec.delta_list)
        for (double alpha : spec.alpha_list) {
          std::vector<double> gaps;
          for (const auto& row : table.rows) {
            if (row[0] != "result") continue;
            if (row[1] == std::to_string(p) && row[3] == format_real(delta) &&
                row[4] == format_real(alpha))
              gaps.push_back(std::strtod(row[8].c_str(), nullptr));
          }
          if (gaps.empty()) continue;
          const int n = static_cast<int>(std::lround(alpha * p));
          std::vector<std::string> med = {"summary",          std::to_string(p),
                                          std::to_string(n),  format_real(delta),
                                          format_real(alpha), "aggregate",
                                          "",                 "",
                                          format_real(detail::percentile(gaps, 0.5)),
                                          "median-gap"};
          std::vector<std::string> p90 = {"summary",          std::to_string(p),
                                          std::to_string(n),  format_real(delta),
                                          format_real(alpha), "aggregate",
                                          "",                 "",
                                          format_real(detail::percentile(gaps, 0.9)),
                                          "p90-gap"};
          table.rows.push_back(med);
          table.rows.push_back(p90);
        }
  }

  out.payload = spec.format == OutputFormat::csv ? table.to_csv() : table.to_json();
  out.manifest.experiment = to_string(spec.name);
  for (const auto& t : tasks) out.manifest.task_seeds.push_back(detail::task_key(spec.name, t.cell));
  out.manifest.results_digest = digest_bytes(out.payload);
  out.manifest.wall_time_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.exit_code = out.failures > 0 ? 1 : 0;

  if (!spec.output_path.empty()) {
    write_text_file(spec.output_path, out.payload);
    char dig[32];
    std::snprintf(dig, sizeof(dig), "%016llx",
                  static_cast<unsigned long long>(out.manifest.results_digest));
    nlohmann::json mj = {{"experiment", out.manifest.experiment},
                         {"code_version", out.manifest.code_version},
                         {"task_seeds", out.manifest.task_seeds},
                         {"wall_time_sec", out.manifest.wall_time_sec},
                         {"results_digest", std::string(dig)},
                         {"failures", out.failures}};
    write_text_file(spec.output_path + ".manifest.json", mj.dump(2) + "\n");
  }
  return out;
}

inline ExperimentSpec spec_from_json(const nlohmann::json& j) {
  ExperimentSpec spec;
  spec.name = parse_experiment_name(j.at("name").get<std::string>());
  if (j.contains("p")) spec.p_list = j.at("p").get<std::vector<int>>();
  if (j.contains("delta")) spec.delta_list = j.at("delta").get<std::vector<double>>();
  if (j.contains("alpha")) spec.alpha_list = j.at("alpha").get<std::vector<double>>();
  if (j.contains("seeds")) spec.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  if (j.contains("workers")) spec.workers = j.at("workers").get<int>();
  if (j.contains("out")) spec.output_path = j.at("out").get<std::string>();
  if (j.contains("format"))
    spec.format = j.at("format").get<std::string>() == "json" ? OutputFormat::json
                                                              : OutputFormat::csv;
  if (j.contains("knobs")) {
    const auto& k = j.at("knobs");
    auto get = [&](const char* key, auto& field) {
      if (k.contains(key)) field = k.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("ez_mc_draws", spec.knobs.ez_mc_draws);
    get("chain_steps", spec.knobs.chain_steps);
    get("chain_burn_in", spec.knobs.chain_burn_in);
    get("chain_thin", spec.knobs.chain_thin);
    get("chains", spec.knobs.chains);
    get("disorder_draws", spec.knobs.disorder_draws);
    get("lambda0_draws", spec.knobs.lambda0_draws);
    get("band_eps", spec.knobs.band_eps);
    get("band_samples", spec.knobs.band_samples);
    get("tap_grid", spec.knobs.tap_grid);
    get("profile_points", spec.knobs.profile_points);
  }
  return spec;
}

}  // namespace tapsphere
