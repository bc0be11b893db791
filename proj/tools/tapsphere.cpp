// Command-line harness: instance generation, free-energy oracles, TAP
// optimization, posterior sampling, annealed quantities, spectral
// diagnostics, and named experiments.
//
// Exit codes: 0 success, 1 numerical failure, 2 usage error.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "tapsphere/tapsphere.hpp"

namespace ts = tapsphere;

namespace {

struct CommonOpts {
  int p = 100;
  int n = 0;
  double alpha = 2.0;
  double delta = 10.0;
  std::uint64_t seed = 1;
  std::string out;
  std::string format = "json";
};

int resolved_n(const CommonOpts& o) {
  return o.n > 0 ? o.n : static_cast<int>(std::lround(o.alpha * o.p));
}

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--p", o.p, "feature dimension");
  cmd->add_option("--n", o.n, "sample count (default alpha*p)");
  cmd->add_option("--alpha", o.alpha, "aspect ratio n/p when --n is absent");
  cmd->add_option("--delta", o.delta, "noise variance");
  cmd->add_option("--seed", o.seed, "RNG seed");
  cmd->add_option("--out", o.out, "output path (default stdout)");
}

void emit(const std::string& out_path, const std::string& payload) {
  if (out_path.empty())
    std::cout << payload << "\n";
  else
    ts::write_text_file(out_path, payload);
}

std::vector<std::string> split_commas(const std::string& text) {
  std::vector<std::string> toks;
  size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const std::string tok = text.substr(pos, comma == std::string::npos ? comma : comma - pos);
    if (!tok.empty()) toks.push_back(tok);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return toks;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  const auto range = text.find("..");
  if (range != std::string::npos) {
    std::vector<std::uint64_t> seeds;
    const std::uint64_t lo = std::strtoull(text.substr(0, range).c_str(), nullptr, 10);
    const std::uint64_t hi = std::strtoull(text.substr(range + 2).c_str(), nullptr, 10);
    for (std::uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
    return seeds;
  }
  std::vector<std::uint64_t> seeds;
  for (const auto& tok : split_commas(text))
    seeds.push_back(std::strtoull(tok.c_str(), nullptr, 10));
  return seeds;
}

std::vector<double> parse_real_list(const std::string& text) {
  std::vector<double> out;
  for (const auto& tok : split_commas(text)) out.push_back(std::strtod(tok.c_str(), nullptr));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TAP free energy toolkit for spherical Bayesian linear regression"};
  app.require_subcommand(1);

  CommonOpts gen_o;
  auto* gen = app.add_subcommand("gen", "generate and serialize an instance");
  add_common(gen, gen_o);
  std::string gen_format = "json";
  gen->add_option("--format", gen_format, "json or bin")
      ->check(CLI::IsMember({"json", "bin"}));

  CommonOpts fe_o;
  auto* fe = app.add_subcommand("free-energy", "log-partition oracles for one instance");
  add_common(fe, fe_o);
  std::string fe_method = "saddle";
  long fe_samples = 1000000;
  std::string fe_in;
  std::string fe_format = "json";
  fe->add_option("--method", fe_method, "saddle, contour, or mc")
      ->check(CLI::IsMember({"saddle", "contour", "mc"}));
  fe->add_option("--samples", fe_samples, "Monte Carlo sample count");
  fe->add_option("--in", fe_in, "load instance from a JSON file instead of generating");
  fe->add_option("--format", fe_format, "json or csv sweep row")
      ->check(CLI::IsMember({"json", "csv"}));

  CommonOpts tap_o;
  auto* tap = app.add_subcommand("tap", "maximize the TAP functional");
  add_common(tap, tap_o);
  int tap_grid = 512;
  std::string tap_profile_out;
  tap->add_option("--grid", tap_grid, "coarse grid size over s");
  tap->add_option("--profile-out", tap_profile_out, "CSV of the phi(s) profile");

  CommonOpts sm_o;
  auto* sm = app.add_subcommand("sample", "posterior MCMC with replica overlaps");
  add_common(sm, sm_o);
  long sm_steps = 20000, sm_burn = 2000;
  int sm_thin = 1, sm_chains = 4;
  double sm_accept = 0.4;
  bool sm_pert = false;
  double sm_lambda0 = 0.75;
  std::string sm_overlaps_out, sm_energy_out;
  sm->add_option("--steps", sm_steps, "total steps per chain");
  sm->add_option("--burn-in", sm_burn, "burn-in steps");
  sm->add_option("--thin", sm_thin, "thinning stride");
  sm->add_option("--chains", sm_chains, "number of chains");
  sm->add_option("--target-accept", sm_accept, "adaptation target");
  sm->add_flag("--perturbed", sm_pert, "sample the perturbed posterior");
  sm->add_option("--lambda0", sm_lambda0, "side-channel strength in [1/2, 1]");
  sm->add_option("--overlaps-out", sm_overlaps_out, "CSV of cross-chain overlaps");
  sm->add_option("--energy-out", sm_energy_out, "CSV of retained energy traces");

  CommonOpts an_o;
  auto* an = app.add_subcommand("annealed", "closed-form annealed quantities");
  add_common(an, an_o);

  CommonOpts sp_o;
  auto* sp = app.add_subcommand("spectra", "Marchenko-Pastur diagnostics");
  add_common(sp, sp_o);
  std::string sp_hist_out;
  int sp_bins = 40;
  sp->add_option("--hist-out", sp_hist_out, "CSV histogram (empirical vs MP mass)");
  sp->add_option("--bins", sp_bins, "histogram bins");

  auto* ex = app.add_subcommand("experiment", "run a named experiment");
  std::string ex_name;
  std::string ex_config;
  std::string ex_p_list, ex_delta_list, ex_alpha_list, ex_seeds;
  int ex_workers = 0;
  std::string ex_out, ex_format = "csv";
  ex->add_option("name", ex_name, "experiment name")->required();
  ex->add_option("--config", ex_config, "JSON config mirroring the experiment spec");
  ex->add_option("--p", ex_p_list, "comma-separated p list");
  ex->add_option("--delta", ex_delta_list, "comma-separated delta list");
  ex->add_option("--alpha", ex_alpha_list, "comma-separated alpha list");
  ex->add_option("--seeds", ex_seeds, "comma-separated seeds or lo..hi range");
  ex->add_option("--workers", ex_workers, "worker threads");
  ex->add_option("--out", ex_out, "output path");
  ex->add_option("--format", ex_format, "csv or json")->check(CLI::IsMember({"csv", "json"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    if (*gen) {
      const ts::ModelConfig cfg(gen_o.p, resolved_n(gen_o), gen_o.delta, gen_o.seed);
      const ts::Instance inst = ts::generate_instance(cfg);
      if (gen_format == "json") {
        emit(gen_o.out, ts::instance_to_json(inst, cfg));
      } else {
        if (gen_o.out.empty()) throw std::runtime_error("gen --format bin requires --out");
        std::ofstream os(gen_o.out, std::ios::binary);
        ts::instance_to_binary(inst, cfg, os);
      }
      return 0;
    }

    if (*fe) {
      ts::Instance inst;
      ts::ModelConfig cfg;
      if (!fe_in.empty()) {
        std::tie(inst, cfg) = ts::instance_from_json(ts::read_text_file(fe_in));
      } else {
        cfg = ts::ModelConfig(fe_o.p, resolved_n(fe_o), fe_o.delta, fe_o.seed);
        inst = ts::generate_instance(cfg);
      }
      ts::FreeEnergyEstimate est;
      if (fe_method == "saddle") {
        est = ts::log_partition_saddle(ts::reduce_to_quadratic(inst, fe_o.delta));
      } else if (fe_method == "contour") {
        est = ts::log_partition_contour(ts::reduce_to_quadratic(inst, fe_o.delta));
      } else {
        ts::RngStream rng = ts::RngStream::seeded(fe_o.seed).split("mc");
        est = ts::mc_log_partition(inst, fe_o.delta, fe_samples, rng);
      }
      if (fe_format == "csv") {
        emit(fe_o.out, ts::sweep_csv_header() + "\n" +
                           ts::sweep_csv_row(inst.p(), inst.n(), fe_o.delta, est));
      } else {
        nlohmann::json j = ts::to_json(est);
        j["p"] = inst.p();
        j["n"] = inst.n();
        j["delta"] = fe_o.delta;
        emit(fe_o.out, j.dump(2));
      }
      return 0;
    }

    if (*tap) {
      const ts::ModelConfig cfg(tap_o.p, resolved_n(tap_o), tap_o.delta, tap_o.seed);
      const ts::Instance inst = ts::generate_instance(cfg);
      const ts::TapOptimum opt = ts::sup_tap_svd(inst, tap_o.delta, tap_grid);
      const ts::TapValue val = ts::tap_value(inst, tap_o.delta, opt.a_star);
      nlohmann::json j = {{"value", opt.value},
                          {"s_star", opt.s_star},
                          {"q_star", val.q},
                          {"mu_star", opt.mu_star},
                          {"terms",
                           {{"fit", val.term_fit},
                            {"onsager", val.term_onsager},
                            {"volume", val.term_volume}}},
                          {"method", ts::to_string(opt.method)},
                          {"iterations", opt.iterations}};
      emit(tap_o.out, j.dump(2));
      if (!tap_profile_out.empty()) {
        const ts::SvdCache cache = ts::build_svd_cache(inst);
        const double alpha = cfg.alpha();
        std::string csv = "s,q_star,term_onsager,term_volume,phi\n";
        for (int i = 0; i <= tap_grid; ++i) {
          const double s = (1.0 - 1e-6) * i / tap_grid;
          const ts::FitOnSphere fit = ts::min_fit_on_sphere(cache, s);
          const double ons = -(alpha / 2.0) * std::log1p((1.0 - s) / (tap_o.delta * alpha));
          const double vol = 0.5 * std::log1p(-s);
          csv += ts::format_real(s) + "," + ts::format_real(fit.q_star) + "," +
                 ts::format_real(ons) + "," + ts::format_real(vol) + "," +
                 ts::format_real(-fit.q_star / (2.0 * tap_o.delta) + ons + vol) + "\n";
        }
        ts::write_text_file(tap_profile_out, csv);
      }
      return 0;
    }

    if (*sm) {
      const ts::ModelConfig cfg(sm_o.p, resolved_n(sm_o), sm_o.delta, sm_o.seed);
      const ts::Instance inst = ts::generate_instance(cfg);
      const ts::ChainConfig ccfg(sm_steps, sm_burn, sm_thin, sm_accept, 0.5, sm_o.seed);
      ts::ReplicaSet reps;
      if (sm_pert) {
        const ts::PerturbationConfig pcfg(sm_lambda0, ts::eps_p_schedule(sm_o.p), sm_o.seed + 1);
        reps = ts::mcmc_posterior(ts::make_perturbed(inst, pcfg), sm_o.delta, ccfg, sm_chains);
      } else {
        reps = ts::mcmc_posterior(inst, sm_o.delta, ccfg, sm_chains);
      }
      const ts::OverlapStats st = ts::overlap_stats(reps, inst.beta0);
      nlohmann::json j = {{"accept_rate", reps.accept_rate},
                          {"ess", reps.ess},
                          {"chains", reps.num_chains},
                          {"retained_per_chain", reps.retained_per_chain},
                          {"mean_r12", st.mean_r12},
                          {"var_r12", st.var_r12},
                          {"mean_r1star", st.mean_r1star},
                          {"se_r12", st.se_r12},
                          {"se_r1star", st.se_r1star},
                          {"num_pairs", st.num_pairs}};
      emit(sm_o.out, j.dump(2));
      if (!sm_overlaps_out.empty()) {
        std::string csv = "chain_i,chain_j,r12\n";
        const long k = reps.retained_per_chain;
        for (int c1 = 0; c1 < reps.num_chains; ++c1)
          for (int c2 = c1 + 1; c2 < reps.num_chains; ++c2)
            for (long i = 0; i < k; ++i) {
              const double r = reps.samples[c1 * k + i].second.dot(
                                   reps.samples[c2 * k + i].second) /
                               inst.p();
              csv += std::to_string(c1) + "," + std::to_string(c2) + "," + ts::format_real(r) +
                     "\n";
            }
        ts::write_text_file(sm_overlaps_out, csv);
      }
      if (!sm_energy_out.empty()) {
        std::string csv = "chain,index,energy\n";
        for (int c = 0; c < reps.num_chains; ++c)
          for (size_t i = 0; i < reps.energy_traces[c].size(); ++i)
            csv += std::to_string(c) + "," + std::to_string(i) + "," +
                   ts::format_real(reps.energy_traces[c][i]) + "\n";
        ts::write_text_file(sm_energy_out, csv);
      }
      return 0;
    }

    if (*an) {
      const int n = resolved_n(an_o);
      const ts::SecondMomentReport rep = ts::annealed_second_moment(an_o.p, n, an_o.delta);
      nlohmann::json j = ts::to_json(rep);
      j["p"] = an_o.p;
      j["n"] = n;
      j["delta"] = an_o.delta;
      j["annealed_free_energy"] = ts::annealed_free_energy(an_o.p, n, an_o.delta);
      emit(an_o.out, j.dump(2));
      return 0;
    }

    if (*sp) {
      const ts::ModelConfig cfg(sp_o.p, resolved_n(sp_o), sp_o.delta, sp_o.seed);
      const ts::Instance inst = ts::generate_instance(cfg);
      const ts::SpectrumReport rep = ts::mp_diagnostics(inst, sp_o.delta);
      nlohmann::json j = {{"p", cfg.p},
                          {"n", cfg.n},
                          {"delta", cfg.delta},
                          {"seed", cfg.seed},
                          {"sigma_max", rep.sigma_max},
                          {"mp_ks_distance", rep.mp_ks_distance},
                          {"quantile_deviation", rep.quantile_deviation},
                          {"in_good_set", rep.in_good_set}};
      emit(sp_o.out, j.dump(2));
      if (!sp_hist_out.empty()) {
        const ts::MarchenkoPastur mp(cfg.p, cfg.n);
        const double lo = 0.0, hi = std::max(mp.support_hi(), rep.eigvals.maxCoeff()) * 1.02;
        std::string csv = "bin_left,bin_right,empirical_mass,mp_mass\n";
        for (int b = 0; b < sp_bins; ++b) {
          const double l = lo + (hi - lo) * b / sp_bins;
          const double r = lo + (hi - lo) * (b + 1) / sp_bins;
          long cnt = 0;
          for (int i = 0; i < cfg.p; ++i)
            if (rep.eigvals[i] >= l && rep.eigvals[i] < r) ++cnt;
          csv += ts::format_real(l) + "," + ts::format_real(r) + "," +
                 ts::format_real(static_cast<double>(cnt) / cfg.p) + "," +
                 ts::format_real(mp.cdf(r) - mp.cdf(l)) + "\n";
        }
        ts::write_text_file(sp_hist_out, csv);
      }
      return 0;
    }

    if (*ex) {
      ts::ExperimentSpec spec;
      if (!ex_config.empty()) {
        spec = ts::spec_from_json(nlohmann::json::parse(ts::read_text_file(ex_config)));
        spec.name = ts::parse_experiment_name(ex_name);
      } else {
        spec.name = ts::parse_experiment_name(ex_name);
        spec.p_list = ts::ExperimentSpec::default_p_list(spec.name);
      }
      if (!ex_p_list.empty()) {
        spec.p_list.clear();
        for (std::uint64_t v : parse_seeds(ex_p_list)) spec.p_list.push_back(static_cast<int>(v));
      }
      if (!ex_delta_list.empty()) spec.delta_list = parse_real_list(ex_delta_list);
      if (!ex_alpha_list.empty()) spec.alpha_list = parse_real_list(ex_alpha_list);
      if (!ex_seeds.empty()) spec.seeds = parse_seeds(ex_seeds);
      if (ex_workers > 0) spec.workers = ex_workers;
      if (!ex_out.empty()) spec.output_path = ex_out;
      spec.format = ex_format == "json" ? ts::OutputFormat::json : ts::OutputFormat::csv;

      const ts::RunOutcome outcome = ts::run_experiment(spec);
      if (spec.output_path.empty()) std::cout << outcome.payload;
      char dig[32];
      std::snprintf(dig, sizeof(dig), "%016llx",
                    static_cast<unsigned long long>(outcome.manifest.results_digest));
      std::cerr << "experiment " << ts::to_string(spec.name) << ": " << outcome.table.rows.size()
                << " rows, digest " << dig << ", " << outcome.failures << " failures, "
                << outcome.manifest.wall_time_sec << "s\n";
      return outcome.exit_code;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
