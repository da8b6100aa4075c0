#include <CLI11.hpp>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "corsma/baselines.hpp"
#include "corsma/deployment.hpp"
#include "corsma/io.hpp"
#include "corsma/pipeline.hpp"

namespace {

constexpr const char* kToolVersion = "0.1.0";

using namespace corsma;

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void apply_override(Scenario& sc, const std::string& key, const std::string& value) {
  const double v = std::stod(value);
  if (key == "U") {
    sc.U = static_cast<int>(v);
  } else if (key == "K") {
    sc.K = static_cast<int>(v);
    sc.rate_thresholds.resize(0);
    sc.weights.resize(0);
  } else if (key == "Nt") {
    sc.Nt = static_cast<int>(v);
  } else if (key == "Nr") {
    sc.Nr = static_cast<int>(v);
  } else if (key == "pmax_dbm") {
    sc.p_max = dbm_to_watts(v);
  } else if (key == "pmax_w") {
    sc.p_max = v;
  } else if (key == "gamma") {
    sc.sensing_threshold = v;
  } else if (key == "rth") {
    sc.rate_thresholds = VecX::Constant(std::max(sc.K, 1), v);
  } else if (key == "bandwidth") {
    sc.bandwidth = v;
  } else if (key == "altitude") {
    sc.uav_altitude = v;
  } else if (key == "noise_dbm") {
    sc.noise_power = dbm_to_watts(v);
  } else {
    throw std::runtime_error("unknown override key: " + key);
  }
}

Scenario base_scenario(const std::string& config, const std::vector<std::string>& sets) {
  Scenario sc = make_default_scenario();
  if (!config.empty()) sc = scenario_from_json(read_file(config));
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw std::runtime_error("--set expects key=value: " + kv);
    apply_override(sc, kv.substr(0, eq), kv.substr(eq + 1));
  }
  return sc;
}

int worker_count() {
  if (const char* env = std::getenv("CORSMA_WORKERS")) {
    const int n = std::atoi(env);
    if (n >= 1) return std::min(n, 16);
  }
  return 1;
}

// Sequential file names keep run directories append-only.
std::string unique_path(const std::string& dir, const std::string& base,
                        const std::string& ext) {
  std::filesystem::create_directories(dir);
  auto candidate = std::filesystem::path(dir) / (base + ext);
  for (int i = 2; std::filesystem::exists(candidate); ++i)
    candidate = std::filesystem::path(dir) / (base + "_" + std::to_string(i) + ext);
  return candidate.string();
}

void record_in_manifest(const std::string& dir, const std::string& file, const Scenario& sc,
                        const std::string& command) {
  nlohmann::json entry;
  entry["file"] = file;
  entry["scenario_hash"] = scenario_hash(sc);
  entry["tool_version"] = kToolVersion;
  entry["command"] = command;
  io::append_manifest(dir, entry);
}

PipelineOptions make_options(const std::string& scheme, std::uint64_t seed,
                             const std::string& mode, int max_outer, double tol,
                             bool no_deploy, bool probe, int samples) {
  PipelineOptions opts;
  opts.scheme = scheme_from_name(scheme);
  opts.seed = seed;
  if (mode == "los_ones")
    opts.mode = ChannelMode::LOS_ONES;
  else if (mode == "los_steering")
    opts.mode = ChannelMode::LOS_STEERING;
  else if (mode == "rayleigh")
    opts.mode = ChannelMode::RAYLEIGH;
  else
    throw std::runtime_error("unknown channel mode: " + mode);
  opts.max_outer = max_outer;
  opts.tol = tol;
  opts.optimize_positions = !no_deploy;
  opts.beamforming.probe_sensing = probe;
  opts.beamforming.randomization_samples = samples;
  if (probe) {
    opts.max_outer = 1;
    opts.optimize_positions = false;
  }
  return opts;
}

double common_ratio(const Solution& sol) {
  if (sol.scheme != Scheme::CORSMA || sol.wsr <= 0.0) return 0.0;
  double c = 0.0;
  for (int k = 0; k < sol.scenario.K; ++k)
    c += sol.scenario.weights[k] * sol.state.common_alloc[k];
  return c / sol.wsr;
}

int cmd_run(const std::string& config, const std::vector<std::string>& sets,
            const std::string& scheme, std::uint64_t seed, const std::string& mode,
            const std::string& out_dir, int max_outer, double tol, bool no_deploy, bool probe,
            int samples) {
  Scenario sc = base_scenario(config, sets);
  if (sc.cs_positions.size() == 0) {
    sc.apply_defaults();
    randomize_cs_positions(sc, seed);
  }
  const PipelineOptions opts =
      make_options(scheme, seed, mode, max_outer, tol, no_deploy, probe, samples);
  const Solution sol = run_pipeline(sc, opts);

  const std::string base = "run_" + scheme_name(sol.scheme) + "_seed" + std::to_string(seed);
  const std::string json_path = unique_path(out_dir, base, ".json");
  io::write_solution(json_path, sol);
  record_in_manifest(out_dir, json_path, sol.scenario, "run");

  // Deployment path table: stations, target, and the UAV track per stage.
  std::vector<std::vector<std::string>> rows;
  for (int k = 0; k < sol.scenario.K; ++k)
    rows.push_back({"cs", std::to_string(k), "0", io::format_sig(sol.scenario.cs_positions(k, 0)),
                    io::format_sig(sol.scenario.cs_positions(k, 1))});
  rows.push_back({"target", "0", "0", io::format_sig(sol.scenario.ts_position[0]),
                  io::format_sig(sol.scenario.ts_position[1])});
  for (size_t s = 0; s < sol.position_history.size(); ++s)
    for (int u = 0; u < sol.scenario.U; ++u)
      rows.push_back({"uav", std::to_string(u), std::to_string(s),
                      io::format_sig(sol.position_history[s](u, 0)),
                      io::format_sig(sol.position_history[s](u, 1))});
  const std::string csv_path = unique_path(out_dir, base + "_path", ".csv");
  io::write_csv(csv_path, {"kind", "index", "stage", "x", "y"}, rows);
  record_in_manifest(out_dir, csv_path, sol.scenario, "run");

  std::cout << "scheme=" << scheme_name(sol.scheme) << " seed=" << seed
            << " wsr=" << io::format_sig(sol.wsr)
            << " sensing_snr=" << io::format_sig(sol.sensing_snr)
            << " outer=" << sol.outer_iterations << " converged=" << sol.converged
            << " feasible=" << sol.feasible << " file=" << json_path << "\n";
  if (!sol.message.empty()) std::cout << "note: " << sol.message << "\n";
  if (!sol.feasible) {
    std::cerr << "run infeasible" << (sol.message.empty() ? "" : ": " + sol.message) << "\n";
    return 2;
  }
  return 0;
}

struct SweepJob {
  double value = 0.0;
  Scheme scheme = Scheme::CORSMA;
  std::uint64_t seed = 0;
};

std::vector<double> default_values(const std::string& param) {
  if (param == "gamma") return {2, 3, 4, 5, 6, 7, 8, 9, 10};
  if (param == "k") return {3, 4, 5, 6, 7, 8};
  if (param == "u") return {1, 2, 3};
  if (param == "pmax") return {15, 20, 25, 30};
  throw std::runtime_error("unknown sweep parameter: " + param);
}

void apply_sweep_param(Scenario& sc, const std::string& param, double value) {
  if (param == "gamma")
    apply_override(sc, "gamma", std::to_string(value));
  else if (param == "k")
    apply_override(sc, "K", std::to_string(value));
  else if (param == "u")
    apply_override(sc, "U", std::to_string(value));
  else
    sc.p_max = dbm_to_watts(value);
}

int cmd_sweep(const std::string& config, const std::vector<std::string>& sets,
              const std::string& param, std::vector<double> values,
              std::vector<std::string> schemes, int seeds, const std::string& mode,
              const std::string& out_dir, int max_outer, double tol, bool no_deploy,
              bool probe, int samples) {
  const Scenario base = base_scenario(config, sets);
  if (values.empty()) values = default_values(param);
  if (schemes.empty()) schemes = {"corsma", "sdma", "noma", "oma"};
  if (seeds < 1) throw std::runtime_error("--seeds must be >= 1");

  std::vector<SweepJob> jobs;
  for (double v : values)
    for (const auto& s : schemes)
      for (int i = 0; i < seeds; ++i)
        jobs.push_back({v, scheme_from_name(s), static_cast<std::uint64_t>(i + 1)});

  struct Row {
    double value = 0.0;
    std::string scheme;
    std::uint64_t seed = 0;
    double wsr = 0.0, ratio = 0.0, sensing = 0.0, runtime = 0.0;
    int outer = 0;
    bool converged = false, feasible = false, failed = false;
    std::string message;
  };
  std::vector<Row> results(jobs.size());

  std::atomic<size_t> next{0};
  auto work = [&] {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      const SweepJob& job = jobs[i];
      Row& row = results[i];
      row.value = job.value;
      row.scheme = scheme_name(job.scheme);
      row.seed = job.seed;
      try {
        Scenario sc = base;
        apply_sweep_param(sc, param, job.value);
        sc.apply_defaults();
        randomize_cs_positions(sc, mix_seed(job.seed, 0xC5));
        PipelineOptions opts = make_options(scheme_name(job.scheme), job.seed, mode, max_outer,
                                            tol, no_deploy, probe, samples);
        const Solution sol = run_pipeline(sc, opts);
        row.wsr = sol.wsr;
        row.ratio = common_ratio(sol);
        row.sensing = sol.sensing_snr;
        row.outer = sol.outer_iterations;
        row.runtime = sol.runtime_seconds;
        row.converged = sol.converged;
        row.feasible = sol.feasible;
        row.message = sol.message;
      } catch (const std::exception& e) {
        row.failed = true;
        row.message = e.what();
      }
    }
  };
  const int workers = worker_count();
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }

  std::vector<std::vector<std::string>> rows;
  for (const auto& r : results) {
    std::string msg = r.message;
    for (auto& ch : msg)
      if (ch == ',') ch = ';';
    rows.push_back({"run", param, io::format_sig(r.value), r.scheme, std::to_string(r.seed),
                    io::format_sig(r.wsr), io::format_sig(r.ratio), io::format_sig(r.sensing),
                    std::to_string(r.outer), io::format_sig(r.runtime),
                    r.converged ? "1" : "0", r.feasible ? "1" : "0", r.failed ? "1" : "0",
                    msg});
  }
  for (double v : values)
    for (const auto& s : schemes) {
      double wsr = 0, ratio = 0, sensing = 0, runtime = 0;
      int n = 0, outer = 0;
      for (const auto& r : results)
        if (r.value == v && r.scheme == s && !r.failed) {
          wsr += r.wsr;
          ratio += r.ratio;
          sensing += r.sensing;
          runtime += r.runtime;
          outer += r.outer;
          ++n;
        }
      if (n == 0) continue;
      rows.push_back({"mean", param, io::format_sig(v), s, std::to_string(n),
                      io::format_sig(wsr / n), io::format_sig(ratio / n),
                      io::format_sig(sensing / n), io::format_sig(double(outer) / n),
                      io::format_sig(runtime / n), "", "", "", ""});
    }

  const std::string base_name = "sweep_" + param + (probe ? "_probe" : "");
  const std::string path = unique_path(out_dir, base_name, ".csv");
  io::write_csv(path,
                {"kind", "param", "value", "scheme", "seed", "wsr", "common_ratio",
                 "sensing_snr", "outer_iterations", "runtime_seconds", "converged", "feasible",
                 "failed", "message"},
                rows);
  record_in_manifest(out_dir, path, base, "sweep " + param);
  std::cout << "wrote " << path << " (" << rows.size() << " rows, " << workers
            << " workers)\n";
  return 0;
}

struct Check {
  std::string name;
  bool pass = false;
  std::string detail;
};

int cmd_selftest(bool inject_gradient_fault) {
  std::vector<Check> checks;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> area(50.0, 450.0);
  std::normal_distribution<double> nd(0.0, 1.0);

  Scenario sc = make_default_scenario(3, 5);
  randomize_cs_positions(sc, 11);
  sc.apply_defaults();
  const Association assoc = kmeans_associate(sc, 11);

  auto random_state = [&](const MatX& positions) {
    BeamformingState st;
    st.uav_positions = positions;
    st.common.resize(sc.U);
    st.private_beams.resize(sc.K);
    st.sensing.resize(sc.U);
    st.common_alloc = VecX::Zero(sc.K);
    auto beam = [&](double power) {
      CVecX p(sc.Nt);
      for (int i = 0; i < sc.Nt; ++i) p[i] = cplx(nd(rng), nd(rng));
      return CVecX(p.normalized() * std::sqrt(power));
    };
    for (int u = 0; u < sc.U; ++u) {
      st.common[u] = beam(0.3 * sc.p_max);
      st.sensing[u] = beam(0.2 * sc.p_max);
    }
    for (int k = 0; k < sc.K; ++k) st.private_beams[k] = beam(0.4 * sc.p_max / 2);
    return st;
  };
  auto random_positions = [&] {
    MatX p(sc.U, 2);
    for (int u = 0; u < sc.U; ++u) {
      p(u, 0) = area(rng);
      p(u, 1) = area(rng);
    }
    return p;
  };

  // Taylor gradient of the surrogate rate against central differences.
  {
    double worst = 0.0;
    const double h = 1e-3;
    for (int trial = 0; trial < 20; ++trial) {
      const MatX pos = random_positions();
      const BeamformingState st = random_state(pos);
      const MatX rhat = deploy::squared_distances(sc, pos);
      const int k = trial % sc.K;
      const int u = assoc.cs_to_uav[k];
      const Vec2 g = deploy::taylor_private_rate(sc, assoc, st, pos, rhat, k).gradient;
      Vec2 fd;
      for (int d = 0; d < 2; ++d) {
        MatX pp = pos, pm = pos;
        pp(u, d) += h;
        pm(u, d) -= h;
        fd[d] = (deploy::surrogate_private_rate(sc, assoc, st, pp, rhat, k) -
                 deploy::surrogate_private_rate(sc, assoc, st, pm, rhat, k)) /
                (2 * h);
      }
      worst = std::max(worst, (g - fd).norm() / std::max(fd.norm(), 1e-9));
    }
    checks.push_back({"gradient rate taylor (20 points)", worst < 1e-5,
                      "max rel err " + io::format_sig(worst)});
  }

  // Sensing-term gradient (optionally with an injected sign fault).
  {
    double worst = 0.0;
    const double h = 1e-3;
    for (int trial = 0; trial < 20; ++trial) {
      const MatX pos = random_positions();
      const BeamformingState st = random_state(pos);
      const auto covs = transmit_covariances(sc, assoc, st);
      const int u = trial % sc.U;
      Vec2 g = deploy::sensing_term_gradient(sc, covs[u], pos.row(u).transpose());
      if (inject_gradient_fault) g = -g;
      Vec2 fd;
      for (int d = 0; d < 2; ++d) {
        Vec2 op = pos.row(u).transpose(), om = op;
        op[d] += h;
        om[d] -= h;
        fd[d] =
            (deploy::sensing_term(sc, covs[u], op) - deploy::sensing_term(sc, covs[u], om)) /
            (2 * h);
      }
      worst = std::max(worst, (g - fd).norm() / std::max(fd.norm(), 1e-12));
    }
    checks.push_back({"gradient sensing term (20 points)", worst < 1e-5,
                      "max rel err " + io::format_sig(worst) +
                          (inject_gradient_fault ? " [fault injected]" : "")});
  }

  // Steering quadratic-form gradient.
  {
    double worst = 0.0;
    const double h = 1e-3;
    for (int trial = 0; trial < 20; ++trial) {
      const MatX pos = random_positions();
      const BeamformingState st = random_state(pos);
      const auto covs = transmit_covariances(sc, assoc, st);
      const int u = trial % sc.U;
      const Vec2 g = deploy::steering_trace_gradient(sc, covs[u], pos.row(u).transpose());
      auto f = [&](const Vec2& o) {
        const CVecX a = steering_vector(sc.Nt, o, sc.uav_altitude, sc.ts_position);
        return (a.adjoint() * covs[u] * a).value().real();
      };
      Vec2 fd;
      for (int d = 0; d < 2; ++d) {
        Vec2 op = pos.row(u).transpose(), om = op;
        op[d] += h;
        om[d] -= h;
        fd[d] = (f(op) - f(om)) / (2 * h);
      }
      worst = std::max(worst, (g - fd).norm() / std::max(fd.norm(), 1e-12));
    }
    checks.push_back({"gradient steering form (20 points)", worst < 1e-5,
                      "max rel err " + io::format_sig(worst)});
  }

  // Closed-form sensing SNR against the Monte-Carlo estimate.
  for (int U : {1, 3}) {
    Scenario s2 = make_default_scenario(U, 4);
    randomize_cs_positions(s2, 23 + U);
    s2.apply_defaults();
    const Association a2 = kmeans_associate(s2, 23 + U);
    MatX pos(U, 2);
    for (int u = 0; u < U; ++u) {
      pos(u, 0) = 150.0 + 70.0 * u;
      pos(u, 1) = 220.0 + 40.0 * u;
    }
    std::mt19937_64 lrng(99);
    std::normal_distribution<double> lnd(0.0, 1.0);
    BeamformingState st;
    st.uav_positions = pos;
    st.common.resize(U);
    st.private_beams.resize(s2.K);
    st.sensing.resize(U);
    st.common_alloc = VecX::Zero(s2.K);
    auto rb = [&](double power) {
      CVecX p(s2.Nt);
      for (int i = 0; i < s2.Nt; ++i) p[i] = cplx(lnd(lrng), lnd(lrng));
      return CVecX(p.normalized() * std::sqrt(power));
    };
    for (int u = 0; u < U; ++u) {
      st.common[u] = rb(0.4 * s2.p_max);
      st.sensing[u] = rb(0.2 * s2.p_max);
    }
    for (int k = 0; k < s2.K; ++k) st.private_beams[k] = rb(0.3 * s2.p_max / 2);
    const double closed = sensing_snr(s2, a2, st);
    const int block = 64, draws = 256;
    const double mc = sensing_snr_monte_carlo(s2, a2, st, block, draws, 17);
    const double rel = std::abs(mc - closed) / closed;
    checks.push_back({"sensing snr oracle U=" + std::to_string(U), rel < 0.02,
                      "rel err " + io::format_sig(rel) + " over " +
                          std::to_string(block * draws) + " samples"});
  }

  // Ball form of the QoS constraint agrees in sign with the raw form.
  {
    int agree = 0;
    const int trials = 100;
    std::uniform_real_distribution<double> cfrac(0.0, 0.9);
    for (int t = 0; t < trials; ++t) {
      const MatX pos = random_positions();
      BeamformingState st = random_state(pos);
      for (int k = 0; k < sc.K; ++k)
        st.common_alloc[k] = cfrac(rng) * sc.rate_thresholds[k];
      const MatX rhat = deploy::squared_distances(sc, random_positions());
      const int k = t % sc.K;
      const double raw = deploy::qos_raw_margin(sc, assoc, st, pos, rhat, k);
      const double ball = deploy::qos_ball_margin(sc, assoc, st, pos, rhat, k);
      if ((raw >= 0) == (ball >= 0)) ++agree;
    }
    checks.push_back({"qos ball equivalence", agree == trials,
                      std::to_string(agree) + "/" + std::to_string(trials)});
  }

  // Small conic solves with known optima.
  {
    conic::ConicProgram lp;
    const int x = lp.new_var(1.0);
    lp.add_nonneg(conic::LinExpr(-1.0).add(x, 1.0));
    const auto r1 = conic::solve(lp);
    conic::ConicProgram socp;
    const int y = socp.new_var(1.0);
    socp.add_soc({conic::LinExpr().add(y, 1.0), conic::LinExpr(3.0), conic::LinExpr(4.0)});
    const auto r2 = conic::solve(socp);
    const bool ok = r1.ok() && std::abs(r1.x[x] - 1.0) < 1e-6 && r2.ok() &&
                    std::abs(r2.x[y] - 5.0) < 1e-6;
    checks.push_back({"conic solver sanity", ok,
                      "lp x=" + io::format_sig(r1.ok() ? r1.x[x] : -1) +
                          " soc y=" + io::format_sig(r2.ok() ? r2.x[y] : -1)});
  }

  // Association invariants.
  {
    bool ok = static_cast<int>(assoc.clusters.size()) == sc.U;
    for (const auto& cl : assoc.clusters)
      if (cl.empty()) ok = false;
    checks.push_back({"kmeans clusters non-empty", ok,
                      "wcss " + io::format_sig(assoc.wcss)});
  }

  bool all = true;
  for (const auto& c : checks) {
    all = all && c.pass;
    std::cout << (c.pass ? "PASS" : "FAIL") << "  " << c.name << "  (" << c.detail << ")\n";
  }
  std::cout << (all ? "selftest passed" : "selftest FAILED") << "\n";
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CoRSMA-ISAC optimization pipeline"};
  app.require_subcommand(1);

  std::string config, mode = "los_ones", out_dir = "results", scheme = "corsma";
  std::vector<std::string> sets, schemes;
  std::uint64_t seed = 1;
  int max_outer = 20, seeds = 10, samples = 100;
  double tol = 1e-3;
  bool no_deploy = false, probe = false, fault = false;
  std::string sweep_param = "gamma";
  std::vector<double> values;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config, "scenario JSON file");
    cmd->add_option("--set", sets, "scenario override key=value (repeatable)");
    cmd->add_option("--out-dir", out_dir, "output directory");
    cmd->add_option("--mode", mode, "channel mode: los_ones|los_steering|rayleigh");
    cmd->add_option("--max-outer", max_outer, "outer iteration cap");
    cmd->add_option("--tol", tol, "outer relative WSR tolerance");
    cmd->add_option("--samples", samples, "randomization samples for extraction");
    cmd->add_flag("--no-deploy", no_deploy, "keep UAVs at the cluster centroids");
    cmd->add_flag("--probe", probe, "maximize sensing SNR instead of WSR");
  };

  CLI::App* run = app.add_subcommand("run", "single optimization run");
  add_common(run);
  run->add_option("--scheme", scheme, "corsma|sdma|noma|oma");
  run->add_option("--seed", seed, "run seed");

  CLI::App* sweep = app.add_subcommand("sweep", "parameter sweep table");
  add_common(sweep);
  sweep->add_option("--sweep", sweep_param, "swept parameter: gamma|k|u|pmax");
  sweep->add_option("--values", values, "swept values (default per parameter)");
  sweep->add_option("--schemes", schemes, "schemes to run (default all)");
  sweep->add_option("--seeds", seeds, "seeds per point");

  CLI::App* selftest = app.add_subcommand("selftest", "internal consistency checks");
  selftest->add_flag("--inject-gradient-fault", fault,
                     "flip the sensing gradient sign to demonstrate detection");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed())
      return cmd_run(config, sets, scheme, seed, mode, out_dir, max_outer, tol, no_deploy,
                     probe, samples);
    if (sweep->parsed())
      return cmd_sweep(config, sets, sweep_param, values, schemes, seeds, mode, out_dir,
                       max_outer, tol, no_deploy, probe, samples);
    if (selftest->parsed()) return cmd_selftest(fault);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
