#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "admmsdp/admm.hpp"
#include "admmsdp/diagnostics.hpp"
#include "admmsdp/error_bound.hpp"
#include "admmsdp/linearization.hpp"
#include "admmsdp/problem.hpp"
#include "admmsdp/sdpa_io.hpp"
#include "admmsdp/trace_io.hpp"

namespace admmsdp::cli {

namespace fs = std::filesystem;

/// Raised for invalid command-line or manifest input.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Reports {
  bool sc = true;
  bool nd = true;
  bool rates = true;
  bool faces = true;
  bool eb = false;
};

/// One run: exactly one instance source, solver settings, output directory.
struct RunManifest {
  std::optional<std::string> instance_path;
  std::optional<json> generator;
  SolverConfig solver;
  std::string out_dir;
  Reports reports;
};

inline Degeneracy parse_degeneracy(const std::string& s) {
  if (s == "none") return Degeneracy::none;
  if (s == "primal_nd_fail") return Degeneracy::primal_nd_fail;
  if (s == "near_degenerate") return Degeneracy::near_degenerate;
  throw UsageError("unknown degeneracy '" + s + "'");
}

inline const char* degeneracy_name(Degeneracy d) {
  switch (d) {
    case Degeneracy::none: return "none";
    case Degeneracy::primal_nd_fail: return "primal_nd_fail";
    case Degeneracy::near_degenerate: return "near_degenerate";
  }
  return "none";
}

inline InitKind parse_init(const std::string& s) {
  if (s == "zero") return InitKind::zero;
  if (s == "gaussian") return InitKind::gaussian;
  if (s == "explicit") return InitKind::explicit_z;
  throw UsageError("unknown init '" + s + "' (expected zero or gaussian)");
}

inline const char* init_name(InitKind k) {
  switch (k) {
    case InitKind::zero: return "zero";
    case InitKind::gaussian: return "gaussian";
    case InitKind::explicit_z: return "explicit";
  }
  return "gaussian";
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path + ": " + e.what());
  }
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
  if (!out) throw FormatError("write failed for " + path.string());
}

/// Manifest keys: instance | generator, sigma, max_iter, tol, seed, init,
/// Z0, time_limit, trace_every, rank_tau, out, reports. Relative paths are
/// resolved against the manifest's directory.
inline RunManifest manifest_from_json(const json& j, const fs::path& base = {}) {
  static const std::vector<std::string> known = {
      "instance", "generator", "sigma",       "max_iter", "tol", "seed",
      "init",     "Z0",        "time_limit",  "trace_every", "rank_tau",
      "out",      "reports"};
  if (!j.is_object()) throw UsageError("manifest must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw UsageError("manifest: unknown key '" + key + "'");
    }
  }
  RunManifest m;
  auto resolve = [&](const std::string& p) {
    fs::path q(p);
    return (q.is_relative() && !base.empty()) ? (base / q).string() : p;
  };
  if (j.contains("instance")) m.instance_path = resolve(j["instance"].get<std::string>());
  if (j.contains("generator")) {
    m.generator = j["generator"];
    if (m.generator->contains("edges_file")) {
      (*m.generator)["edges_file"] = resolve((*m.generator)["edges_file"].get<std::string>());
    }
  }
  if (j.contains("sigma")) m.solver.sigma = j["sigma"].get<double>();
  if (j.contains("max_iter")) m.solver.max_iter = j["max_iter"].get<long>();
  if (j.contains("tol")) m.solver.tol_rmax = j["tol"].get<double>();
  if (j.contains("seed")) m.solver.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("init")) m.solver.init = parse_init(j["init"].get<std::string>());
  if (j.contains("Z0")) {
    m.solver.Z0 = SymMat(matrix_from_json(j["Z0"]));
    if (!j.contains("init")) m.solver.init = InitKind::explicit_z;
  }
  if (j.contains("time_limit") && !j["time_limit"].is_null()) {
    m.solver.time_limit_secs = j["time_limit"].get<double>();
  }
  if (j.contains("trace_every")) m.solver.trace_every = j["trace_every"].get<long>();
  if (j.contains("rank_tau")) m.solver.rank_tau = j["rank_tau"].get<double>();
  if (j.contains("out")) m.out_dir = resolve(j["out"].get<std::string>());
  if (j.contains("reports")) {
    const auto& r = j["reports"];
    m.reports.sc = r.value("sc", true);
    m.reports.nd = r.value("nd", true);
    m.reports.rates = r.value("rates", true);
    m.reports.faces = r.value("faces", true);
    m.reports.eb = r.value("eb", false);
  }
  return m;
}

inline json manifest_to_json(const RunManifest& m) {
  json j;
  if (m.instance_path) j["instance"] = fs::absolute(*m.instance_path).string();
  if (m.generator) j["generator"] = *m.generator;
  j["sigma"] = m.solver.sigma;
  j["max_iter"] = m.solver.max_iter;
  j["tol"] = m.solver.tol_rmax;
  j["seed"] = m.solver.seed;
  j["init"] = init_name(m.solver.init);
  if (m.solver.Z0) j["Z0"] = matrix_to_json(m.solver.Z0->mat());
  j["time_limit"] = m.solver.time_limit_secs ? json(*m.solver.time_limit_secs) : json();
  j["trace_every"] = m.solver.trace_every;
  j["rank_tau"] = m.solver.rank_tau;
  j["out"] = m.out_dir;
  j["reports"] = {{"sc", m.reports.sc},
                  {"nd", m.reports.nd},
                  {"rates", m.reports.rates},
                  {"faces", m.reports.faces},
                  {"eb", m.reports.eb}};
  return j;
}

/// Edge list: one "i j" pair per line, 1-based; '#' starts a comment.
inline Matrix read_edge_list(std::istream& in, Index nodes = 0) {
  std::vector<std::pair<long, long>> edges;
  std::string line;
  long lineno = 0, maxv = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    std::istringstream is(line);
    long a, b;
    if (!(is >> a)) continue;
    if (!(is >> b) || a < 1 || b < 1) {
      throw FormatError("edge list line " + std::to_string(lineno) + ": expected 'i j'");
    }
    edges.emplace_back(a, b);
    maxv = std::max({maxv, a, b});
  }
  const Index n = nodes > 0 ? nodes : maxv;
  if (n == 0) throw FormatError("edge list: no nodes");
  Matrix adj = Matrix::Zero(n, n);
  for (auto [a, b] : edges) {
    if (a > n || b > n) throw FormatError("edge list: vertex index exceeds node count");
    if (a == b) throw FormatError("edge list: self loop");
    adj(a - 1, b - 1) = adj(b - 1, a - 1) = 1.0;
  }
  return adj;
}

struct LoadedInstance {
  SdpProblem problem;
  std::string name;
  std::optional<PlantedCertificate> certificate;
};

inline LoadedInstance load_instance(const RunManifest& m) {
  if (m.instance_path.has_value() == m.generator.has_value()) {
    throw UsageError("exactly one instance source (instance path or generator) is required");
  }
  LoadedInstance li;
  if (m.instance_path) {
    li.problem = load_sdpa(*m.instance_path);
    li.name = fs::path(*m.instance_path).stem().string();
    return li;
  }
  const json& g = *m.generator;
  const std::string kind = g.value("kind", "");
  if (kind == "planted") {
    const Index n = g.at("n").get<Index>(), mm = g.at("m").get<Index>(),
                r = g.at("r").get<Index>();
    const auto seed = g.value("seed", std::uint64_t{0});
    const Degeneracy deg = parse_degeneracy(g.value("degeneracy", std::string("none")));
    auto inst = generate_planted(n, mm, r, seed, deg);
    li.problem = std::move(inst.problem);
    li.certificate = std::move(inst.certificate);
    std::ostringstream os;
    os << "planted-n" << n << "-m" << mm << "-r" << r << "-seed" << seed;
    if (deg != Degeneracy::none) os << "-" << degeneracy_name(deg);
    li.name = os.str();
  } else if (kind == "maxcut") {
    Matrix adj;
    if (g.contains("edges_file")) {
      std::ifstream in(g["edges_file"].get<std::string>());
      if (!in) throw FormatError("cannot open " + g["edges_file"].get<std::string>());
      adj = read_edge_list(in, g.value("n", Index{0}));
    } else {
      std::ostringstream es;
      for (const auto& e : g.at("edges")) es << e.at(0).get<long>() << ' ' << e.at(1).get<long>() << '\n';
      std::istringstream is(es.str());
      adj = read_edge_list(is, g.value("n", Index{0}));
    }
    li.problem = generate_maxcut(adj);
    li.name = "maxcut-n" + std::to_string(adj.rows());
  } else {
    throw UsageError("generator.kind must be 'planted' or 'maxcut'");
  }
  return li;
}

inline json residuals_json(const Residuals& r) {
  return {{"r_p", r.r_p}, {"r_d", r.r_d}, {"r_gap", r.r_gap}, {"r_max", r.r_max}};
}

struct RunOutcome {
  SolveStatus status = SolveStatus::numerical_failure;
  long iterations = 0;
  double r_max = 0;
  std::string out_dir;
  std::string error;
};

/// Solves one manifest and writes trace.csv, trace.json, summary.json,
/// final_Z.json, run.json and instance.dat-s into the output directory.
inline RunOutcome run_solve(const RunManifest& m) {
  RunOutcome o;
  o.out_dir = m.out_dir;
  if (m.out_dir.empty()) throw UsageError("an output directory is required (--out)");
  const LoadedInstance li = load_instance(m);
  m.solver.validate();
  const fs::path dir(m.out_dir);
  fs::create_directories(dir);

  const ConstraintKernel kernel(li.problem);
  const SolveResult res = solve(li.problem, kernel, m.solver);

  {
    std::ostringstream csv;
    write_trace_csv(csv, res.records);
    write_text(dir / "trace.csv", csv.str());
  }
  TraceMetadata meta{li.name, m.solver.sigma, m.solver.seed, to_string(res.status)};
  json tj = trace_json(meta, res.records);
  tj["wall_time_secs"] = res.wall_time_secs;
  write_text(dir / "trace.json", tj.dump(1) + "\n");

  json summary;
  summary["instance"] = li.name;
  summary["status"] = to_string(res.status);
  summary["iterations"] = res.iterations;
  summary["final_k"] = res.state.k;
  summary["wall_time_secs"] = res.wall_time_secs;
  summary["sigma"] = m.solver.sigma;
  summary["seed"] = m.solver.seed;
  if (res.state.X.n() == li.problem.n && res.state.y.size() == li.problem.m) {
    summary["residuals"] = residuals_json(res.state.residuals);
    summary["primal_objective"] = inner(li.problem.C, res.state.X);
    summary["dual_objective"] = li.problem.b.dot(res.state.y);
  }
  if (!res.message.empty()) summary["message"] = res.message;
  write_text(dir / "summary.json", summary.dump(1) + "\n");

  if (res.state.Z.n() == li.problem.n) {
    json zj = {{"n", li.problem.n}, {"Z", matrix_to_json(res.state.Z.mat())}};
    write_text(dir / "final_Z.json", zj.dump() + "\n");
  }
  save_sdpa((dir / "instance.dat-s").string(), li.problem, li.name);
  json run = manifest_to_json(m);
  run["instance_name"] = li.name;
  write_text(dir / "run.json", run.dump(1) + "\n");

  o.status = res.status;
  o.iterations = res.iterations;
  o.r_max = res.state.residuals.r_max;
  return o;
}

/// Process exit code and the single status line for stderr.
struct CommandResult {
  int code = 0;
  std::string status;
};

inline int exit_code_for(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged: return 0;
    case SolveStatus::iter_limit:
    case SolveStatus::time_limit: return 2;
    case SolveStatus::numerical_failure: return 1;
  }
  return 1;
}

inline std::string sci(double v, int prec = 3) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(prec) << v;
  return os.str();
}

inline std::string fixed(double v, int prec = 6) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

inline CommandResult cmd_solve(const std::vector<RunManifest>& runs, int jobs,
                               std::ostream& out) {
  if (runs.empty()) throw UsageError("solve: no runs given");
  std::vector<RunOutcome> outcomes(runs.size());
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next++;
      if (i >= runs.size()) return;
      RunOutcome o;
      try {
        o = run_solve(runs[i]);
      } catch (const std::exception& e) {
        o.status = SolveStatus::numerical_failure;
        o.out_dir = runs[i].out_dir;
        o.error = e.what();
      }
      std::lock_guard<std::mutex> lock(mu);
      if (o.error.empty()) {
        out << o.out_dir << ": " << to_string(o.status) << " after " << o.iterations
            << " iterations, r_max = " << sci(o.r_max) << "\n";
      } else {
        out << o.out_dir << ": error: " << o.error << "\n";
      }
      outcomes[i] = std::move(o);
    }
  };
  const int nthreads = std::max(1, std::min<int>(jobs, static_cast<int>(runs.size())));
  if (nthreads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  CommandResult cr;
  if (runs.size() == 1) {
    const auto& o = outcomes[0];
    if (!o.error.empty()) {
      cr.code = 1;
      cr.status = "solve: error: " + o.error;
    } else {
      cr.code = exit_code_for(o.status);
      cr.status = std::string("solve: ") + to_string(o.status) + " after " +
                  std::to_string(o.iterations) + " iterations (r_max " + sci(o.r_max) + ")";
    }
    return cr;
  }
  int conv = 0, lim = 0, err = 0;
  for (const auto& o : outcomes) {
    const int c = o.error.empty() ? exit_code_for(o.status) : 1;
    if (c == 0) ++conv;
    else if (c == 2) ++lim;
    else ++err;
  }
  cr.code = err ? 1 : (lim ? 2 : 0);
  cr.status = "solve: " + std::to_string(runs.size()) + " runs, " + std::to_string(conv) +
              " converged, " + std::to_string(lim) + " hit a limit, " +
              std::to_string(err) + " failed";
  return cr;
}

inline json fit_json(const RateFit& f) {
  return {{"sequence", f.sequence_name},
          {"window_start", f.window_start},
          {"window_end", f.window_end},
          {"rho_hat", f.rho_hat},
          {"r2", f.r2}};
}

/// Re-reads a finished run, analyses the final iterate and the trace, writes
/// diagnostics.json, appends "#fit" rows to trace.csv and prints a summary.
inline CommandResult cmd_diagnose(const std::string& run_dir, std::ostream& out,
                                  std::optional<Reports> override_reports = std::nullopt) {
  const fs::path dir(run_dir);
  for (const char* f : {"run.json", "summary.json", "final_Z.json", "instance.dat-s", "trace.csv"}) {
    if (!fs::exists(dir / f)) {
      throw FormatError("diagnose: missing artifact " + (dir / f).string());
    }
  }
  const json run = read_json_file((dir / "run.json").string());
  const json summary = read_json_file((dir / "summary.json").string());
  RunManifest m;
  {
    json mj = run;
    mj.erase("instance_name");
    mj.erase("instance");
    mj.erase("generator");
    m = manifest_from_json(mj);
  }
  const Reports reports = override_reports.value_or(m.reports);
  const SdpProblem p = load_sdpa((dir / "instance.dat-s").string());
  const ConstraintKernel kernel(p);
  const SymMat zf(matrix_from_json(read_json_file((dir / "final_Z.json").string()).at("Z")));
  std::vector<IterationRecord> records;
  {
    std::ifstream in(dir / "trace.csv");
    records = read_trace_csv(in);
  }
  const std::string status = summary.at("status").get<std::string>();
  const bool converged = status == "converged";
  const long last_k = summary.at("final_k").get<long>();
  const double sigma = m.solver.sigma;
  const double tau = m.solver.rank_tau;

  const SpectralDecomp d = eig_sym(zf);
  const ComplementarityReport sc = sc_check(d, tau);
  json dj;
  dj["run"] = run_dir;
  dj["instance"] = run.value("instance_name", std::string());
  dj["status"] = status;
  dj["converged"] = converged;
  dj["sc"] = {{"r", sc.r},
              {"s", sc.s},
              {"n", sc.n},
              {"lam_min_absZ", sc.lam_min_absZ},
              {"eigengap", sc.eigengap},
              {"sc_holds", sc.sc_holds}};

  std::ostringstream table;
  if (!converged) {
    table << "*** NOT CONVERGED (status " << status
          << "): diagnostics refer to the last iterate, no rate assertions ***\n";
  }
  table << "run: " << run_dir << "  instance: " << dj["instance"].get<std::string>()
        << "  iterations: " << summary.at("iterations").get<long>() << "\n";

  std::optional<NondegeneracyReport> nd;
  if (reports.nd) {
    nd = nd_check(kernel, d, tau);
    dj["nd"] = {{"rank_W1", nd->rank_W1},
                {"rank_W2", nd->rank_W2},
                {"rank_joint", nd->rank_joint},
                {"dual_rank_W1", nd->dual_rank_W1},
                {"dual_rank_W2", nd->dual_rank_W2},
                {"dual_rank_joint", nd->dual_rank_joint},
                {"primal_nd", nd->primal_nd},
                {"dual_nd", nd->dual_nd}};
  }
  auto word = [](bool b) { return b ? "holds" : "fails"; };
  table << "SC: " << word(sc.sc_holds);
  if (nd) table << ", primal ND: " << word(nd->primal_nd) << ", dual ND: " << word(nd->dual_nd);
  table << "\n";
  table << "  rank X* = " << sc.r << ", rank S* = " << sc.s << ", n = " << sc.n
        << ", lambda_min|Z*| = " << sci(sc.lam_min_absZ) << ", eigengap = "
        << sci(sc.eigengap) << "\n";
  if (nd) {
    table << "  primal ranks W1/W2/joint = " << nd->rank_W1 << "/" << nd->rank_W2 << "/"
          << nd->rank_joint << ", dual = " << nd->dual_rank_W1 << "/" << nd->dual_rank_W2
          << "/" << nd->dual_rank_joint << "\n";
  }

  std::optional<double> norm_m, norm_mf;
  if (sc.sc_holds && is_nonsingular_reference(d)) {
    const OmegaStructure os = build_omega(d);
    norm_m = op_norm_M(os, kernel);
    const FixSubspace fix = fix_basis(os, kernel);
    norm_mf = fix.dim() ? op_norm_M_minus_fix(os, kernel, fix) : *norm_m;
    dj["op_norm_M"] = *norm_m;
    dj["op_norm_M_minus_fix"] = *norm_mf;
    dj["fix_dim"] = fix.dim();
    table << "||M|| = " << fixed(*norm_m) << ", ||M - Pi_Fix|| = " << fixed(*norm_mf)
          << ", dim Fix(M) = " << fix.dim() << "\n";
  } else {
    const DirectionalStructure ds = build_directional(d);
    const RhoEstimate rho = rho_nd_estimate(ds, kernel, 20, 1);
    dj["rho_nd_estimate"] = {{"value", rho.value}, {"samples", rho.samples}};
    table << "singular limit: rho_ND estimate (lower bound, " << rho.samples
          << " samples) = " << fixed(rho.value) << "\n";
  }

  const auto kid = rank_trace(records, sc);
  dj["k_id"] = kid ? json(*kid) : json();
  table << "rank identification: " << (kid ? "k_id = " + std::to_string(*kid) : "none")
        << "\n";

  std::vector<RateFit> fits;
  json rate_check;
  if (converged && reports.rates && last_k > 0) {
    const RunAnalysis a = replay_analysis(p, kernel, m.solver, zf, last_k);
    const long k0 = kid.value_or(0);
    const double floor = kTailFloorFactor * a.final_step;
    if (auto f = tail_rate_fit(a.r_max, k0, 0.0, "r_max")) fits.push_back(*f);
    if (auto f = tail_rate_fit(a.norm_H, k0, floor, "norm_H")) fits.push_back(*f);
    if (auto f = tail_rate_fit(a.norm_HO, k0, floor, "norm_HO")) fits.push_back(*f);
    if (reports.faces) {
      if (auto f = tail_rate_fit(a.face_X, k0, floor, "face_X")) fits.push_back(*f);
      if (auto f = tail_rate_fit(a.face_S, k0, floor, "face_S")) fits.push_back(*f);
    }
    auto find = [&](const std::string& nm) -> const RateFit* {
      for (const auto& f : fits)
        if (f.sequence_name == nm) return &f;
      return nullptr;
    };
    if (norm_m && nd && nd->primal_nd && nd->dual_nd) {
      if (const RateFit* f = find("norm_H")) {
        const bool ok = f->rho_hat <= *norm_m + 0.02;
        rate_check = {{"sequence", "norm_H"}, {"rho_hat", f->rho_hat},
                      {"bound", *norm_m + 0.02}, {"pass", ok}};
      }
    } else if (norm_mf) {
      if (const RateFit* f = find("norm_HO")) {
        const bool ok = f->rho_hat <= *norm_mf + 0.02;
        rate_check = {{"sequence", "norm_HO"}, {"rho_hat", f->rho_hat},
                      {"bound", *norm_mf + 0.02}, {"pass", ok}};
      }
    }
  }
  dj["fits"] = json::array();
  for (const auto& f : fits) dj["fits"].push_back(fit_json(f));
  dj["rate_check"] = rate_check;
  if (!fits.empty()) {
    table << "sequence   window            rho_hat    r2\n";
    for (const auto& f : fits) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%-10s [%6ld, %6ld]  %.6f  %.6f\n",
                    f.sequence_name.c_str(), f.window_start, f.window_end, f.rho_hat,
                    f.r2);
      table << buf;
    }
  }
  if (!rate_check.is_null()) {
    table << "rate check: rho_hat(" << rate_check["sequence"].get<std::string>()
          << ") = " << fixed(rate_check["rho_hat"].get<double>()) << " <= "
          << fixed(rate_check["bound"].get<double>()) << ": "
          << (rate_check["pass"].get<bool>() ? "pass" : "FAIL") << "\n";
  }

  if (reports.faces && sc.sc_holds) {
    const auto split = psd_split(d);
    const auto terms =
        backward_error_terms(p, kernel, d, split.pos, (1.0 / sigma) * split.neg, sigma, tau);
    json bj = json::object();
    for (const auto& t : terms) bj[t.name] = t.value;
    dj["backward_error_terms"] = bj;
  }

  write_text(dir / "diagnostics.json", dj.dump(1) + "\n");

  // Rewrite the trace with fresh "#fit" footer rows.
  {
    std::ifstream in(dir / "trace.csv");
    std::ostringstream kept;
    std::string line;
    while (std::getline(in, line)) {
      if (line.rfind("#fit", 0) == 0) continue;
      kept << line << "\n";
    }
    in.close();
    for (const auto& f : fits) {
      kept << "#fit," << f.sequence_name << ',' << f.window_start << ',' << f.window_end
           << ',' << format_double(f.rho_hat) << ',' << format_double(f.r2) << "\n";
    }
    write_text(dir / "trace.csv", kept.str());
  }

  out << table.str();
  CommandResult cr;
  cr.code = 0;
  std::ostringstream st;
  st << "diagnose: " << (converged ? "" : "not converged; ") << "SC " << word(sc.sc_holds);
  if (nd) st << ", primal ND " << word(nd->primal_nd) << ", dual ND " << word(nd->dual_nd);
  if (!rate_check.is_null()) {
    st << ", rate check " << (rate_check["pass"].get<bool>() ? "pass" : "fail");
  }
  cr.status = st.str();
  return cr;
}

struct EbArgs {
  std::optional<std::string> z_path;
  std::optional<Index> z_random;
  std::optional<std::string> h_path;
  std::string h_kind = "random";
  std::uint64_t seed = 1;
  std::vector<double> scales = {1e-1, 1e-2, 1e-3, 1e-4};
  std::string out_dir;
};

/// Random nonsingular symmetric matrix with half positive, half negative
/// eigenvalues of magnitude in [0.5, 2].
inline SymMat random_nonsingular(Index n, Rng& rng) {
  const Matrix q = rng.orthogonal(n);
  Vector lam(n);
  const Index r = std::max<Index>(1, n / 2);
  for (Index i = 0; i < n; ++i) {
    const double v = rng.uniform(0.5, 2.0);
    lam(i) = i < r ? v : -v;
  }
  return SymMat(q * lam.asDiagonal() * q.transpose());
}

inline CommandResult cmd_eb_verify(const EbArgs& args, std::ostream& out) {
  if (args.z_path.has_value() == args.z_random.has_value()) {
    throw UsageError("eb-verify: give exactly one of --z-file or --z-random");
  }
  if (args.scales.empty()) throw UsageError("eb-verify: no scales");
  Rng rng(args.seed);
  SymMat z;
  if (args.z_path) {
    json j = read_json_file(*args.z_path);
    z = SymMat(matrix_from_json(j.is_object() ? j.at("Z") : j));
  } else {
    if (*args.z_random < 2) throw UsageError("eb-verify: --z-random needs n >= 2");
    z = random_nonsingular(*args.z_random, rng);
  }
  const Index n = z.n();
  const SpectralDecomp d = eig_sym(z);
  const ComplementarityReport sc = sc_check(d, 1e-12);
  if (!sc.sc_holds || !is_nonsingular_reference(d)) {
    CommandResult cr;
    cr.code = 1;
    cr.status = "eb-verify: Z is singular (min |lambda| = " + sci(sc.lam_min_absZ) +
                ", eigengap = " + sci(sc.eigengap) + ")";
    return cr;
  }
  const OmegaStructure os = build_omega(d);

  std::function<SymMat(double)> path;
  SymMat hfix;
  if (args.h_path) {
    json j = read_json_file(*args.h_path);
    hfix = SymMat(matrix_from_json(j.is_object() ? j.at("H") : j));
    if (hfix.n() != n) throw DimensionMismatch("eb-verify: H and Z sizes differ");
    path = [hfix](double t) { return t * hfix; };
  } else {
    const Matrix g = os.to_local(rng.sym_gaussian(n));
    const auto b = split_blocks(g, os.r);
    const Matrix diag = join_blocks(b.X, Matrix::Zero(b.O.rows(), os.r), b.S);
    const Matrix off = join_blocks(Matrix::Zero(os.r, os.r), b.O, Matrix::Zero(b.S.rows(), b.S.rows()));
    if (args.h_kind == "random") {
      hfix = os.from_local(g);
      path = [hfix](double t) { return t * hfix; };
    } else if (args.h_kind == "block") {
      hfix = os.from_local(diag);
      path = [hfix](double t) { return t * hfix; };
    } else if (args.h_kind == "anisotropic") {
      const SymMat hd = os.from_local(diag), ho = os.from_local(off);
      path = [hd, ho](double t) { return t * hd + (t * t) * ho; };
    } else {
      throw UsageError("eb-verify: --h-kind must be random, block or anisotropic");
    }
  }

  const EbReport rep = eb_scan(z, path, args.scales);
  double tmin = args.scales[0];
  for (double t : args.scales) tmin = std::min(tmin, t);
  const SymMat hmin = path(tmin);
  const EliminationResult el = run_elimination(z, hmin);
  const double dev = (el.V - psd_project(z + hmin)).norm_fro();
  const double tol = 1e-9 * std::max(1.0, (z + hmin).norm_fro());

  if (!args.out_dir.empty()) {
    const fs::path dir(args.out_dir);
    fs::create_directories(dir);
    std::ostringstream csv;
    rep.write_csv(csv);
    write_text(dir / "eb.csv", csv.str());
    json j = rep.to_json();
    j["h_kind"] = args.h_path ? "file" : args.h_kind;
    j["elimination"] = {{"t", tmin},
                        {"iterations", el.iterations},
                        {"deviation", dev},
                        {"tolerance", tol},
                        {"off_norms", el.off_norms}};
    write_text(dir / "eb.json", j.dump(1) + "\n");
  }

  out << "t            lhs          ho_norm      refined      classic\n";
  for (std::size_t i = 0; i < rep.scales.size(); ++i) {
    out << sci(rep.scales[i], 2) << "  " << sci(rep.lhs[i]) << "  " << sci(rep.ho_norms[i])
        << "  " << sci(rep.refined_ratios[i]) << "  " << sci(rep.classic_ratios[i]) << "\n";
  }
  out << "Algorithm-1 agreement at t = " << sci(tmin, 2) << ": max deviation " << sci(dev)
      << " (" << el.iterations << " iterations)\n";

  CommandResult cr;
  cr.code = dev <= tol ? 0 : 1;
  cr.status = std::string("eb-verify: ") + (dev <= tol ? "ok" : "elimination disagrees") +
              ", Algorithm-1 deviation " + sci(dev);
  return cr;
}

struct GenerateArgs {
  std::string kind;
  Index n = 0;
  Index m = 0;
  Index r = 0;
  std::uint64_t seed = 1;
  std::string degeneracy = "none";
  std::optional<std::string> edges;
  Index nodes = 0;
  std::string out;
};

inline fs::path certificate_path(const fs::path& dat) {
  fs::path c = dat;
  c.replace_extension(".cert.json");
  return c;
}

inline CommandResult cmd_generate(const GenerateArgs& a, std::ostream& out) {
  if (a.out.empty()) throw UsageError("generate: --out is required");
  const fs::path path(a.out);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  CommandResult cr;
  if (a.kind == "planted") {
    const Degeneracy deg = parse_degeneracy(a.degeneracy);
    const auto inst = generate_planted(a.n, a.m, a.r, a.seed, deg);
    std::ostringstream name;
    name << "planted n=" << a.n << " m=" << a.m << " r=" << a.r << " seed=" << a.seed
         << " degeneracy=" << degeneracy_name(deg);
    save_sdpa(path.string(), inst.problem, name.str());
    const auto& c = inst.certificate;
    const Residuals res = residuals(inst.problem, c.Xstar, c.ystar, c.Sstar);
    json cj = {{"n", a.n},
               {"m", a.m},
               {"r", c.r},
               {"s", c.s},
               {"seed", a.seed},
               {"degeneracy", degeneracy_name(deg)},
               {"Xstar", matrix_to_json(c.Xstar.mat())},
               {"ystar", vector_to_json(c.ystar)},
               {"Sstar", matrix_to_json(c.Sstar.mat())},
               {"Qstar", matrix_to_json(c.Qstar)},
               {"residuals", residuals_json(res)},
               {"complementarity", inner(c.Xstar, c.Sstar)}};
    const fs::path cp = certificate_path(path);
    write_text(cp, cj.dump(1) + "\n");
    out << "wrote " << path.string() << " and " << cp.string() << "\n";
    cr.status = "generate: planted instance written, certificate r_max " + sci(res.r_max);
  } else if (a.kind == "maxcut") {
    if (!a.edges) throw UsageError("generate maxcut: --edges FILE is required");
    std::ifstream in(*a.edges);
    if (!in) throw FormatError("cannot open " + *a.edges);
    const SdpProblem p = generate_maxcut(read_edge_list(in, a.nodes));
    save_sdpa(path.string(), p, "maxcut relaxation of " + *a.edges);
    out << "wrote " << path.string() << "\n";
    cr.status = "generate: maxcut instance with n = " + std::to_string(p.n) + " written";
  } else {
    throw UsageError("generate: kind must be planted or maxcut");
  }
  return cr;
}

/// Full command-line entry point. Writes regular output to `out` and exactly
/// one status line to `err`; returns the process exit code.
inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"ADMM for standard-form semidefinite programs, with local convergence diagnostics"};
  app.require_subcommand(1);

  // solve
  auto* solve_cmd = app.add_subcommand("solve", "Solve one or more instances");
  std::vector<std::string> manifests;
  std::string instance, out_dir, init;
  double sigma = 1, tol = 1e-10, time_limit = 0;
  long max_iter = 0, trace_every = 1;
  std::uint64_t seed = 0;
  int jobs = 1;
  solve_cmd->add_option("--manifest", manifests, "JSON run manifest (repeatable)");
  auto* o_instance = solve_cmd->add_option("--instance", instance, "SDPA .dat-s file");
  auto* o_sigma = solve_cmd->add_option("--sigma", sigma, "Penalty parameter");
  auto* o_maxit = solve_cmd->add_option("--max-iter", max_iter, "Iteration limit");
  auto* o_tol = solve_cmd->add_option("--tol", tol, "Stopping tolerance on r_max");
  auto* o_seed = solve_cmd->add_option("--seed", seed, "Seed for gaussian initialization");
  auto* o_init = solve_cmd->add_option("--init", init, "Initialization")
                     ->check(CLI::IsMember({"zero", "gaussian"}));
  auto* o_out = solve_cmd->add_option("--out", out_dir, "Output directory");
  auto* o_tl = solve_cmd->add_option("--time-limit", time_limit, "Wall-clock limit (s)");
  auto* o_te = solve_cmd->add_option("--trace-every", trace_every, "Trace sampling stride");
  solve_cmd->add_option("--jobs", jobs, "Concurrent runs")->check(CLI::PositiveNumber);

  // diagnose
  auto* diag_cmd = app.add_subcommand("diagnose", "Analyse a finished run directory");
  std::string run_dir, diag_manifest;
  diag_cmd->add_option("--run", run_dir, "Run directory written by solve");
  diag_cmd->add_option("--manifest", diag_manifest, "Manifest whose 'out' is the run");
  diag_cmd->add_option("--out", run_dir, "Alias for --run");

  // eb-verify
  auto* eb_cmd = app.add_subcommand("eb-verify", "Scan the refined projection error bound");
  EbArgs eb;
  std::string z_path, h_path;
  Index z_random = 0;
  auto* o_z = eb_cmd->add_option("--z-file", z_path, "JSON matrix (or final_Z.json)");
  auto* o_zr = eb_cmd->add_option("--z-random", z_random, "Random nonsingular Z of this size");
  auto* o_h = eb_cmd->add_option("--h-file", h_path, "JSON matrix for H");
  eb_cmd->add_option("--h-kind", eb.h_kind, "random | block | anisotropic")
      ->check(CLI::IsMember({"random", "block", "anisotropic"}));
  eb_cmd->add_option("--seed", eb.seed, "Seed for random Z and H");
  eb_cmd->add_option("--scales", eb.scales, "Comma-separated scales")->delimiter(',');
  eb_cmd->add_option("--out", eb.out_dir, "Output directory for eb.csv / eb.json");

  // generate
  auto* gen_cmd = app.add_subcommand("generate", "Write an instance file");
  GenerateArgs gen;
  gen_cmd->add_option("kind", gen.kind, "planted | maxcut")
      ->required()
      ->check(CLI::IsMember({"planted", "maxcut"}));
  gen_cmd->add_option("--n", gen.n, "Matrix dimension");
  gen_cmd->add_option("--m", gen.m, "Number of constraints");
  gen_cmd->add_option("--r", gen.r, "Rank of the planted primal solution");
  gen_cmd->add_option("--seed", gen.seed, "Generator seed");
  gen_cmd->add_option("--degeneracy", gen.degeneracy, "none | primal_nd_fail | near_degenerate");
  gen_cmd->add_option("--edges", gen.edges, "Edge list (1-based 'i j' per line)");
  gen_cmd->add_option("--nodes", gen.nodes, "Node count (default: largest index)");
  gen_cmd->add_option("--out", gen.out, "Output .dat-s path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    err << "help shown\n";
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    err << "help shown\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    for (char& c : msg)
      if (c == '\n') c = ' ';
    err << "error: " << msg << "\n";
    return 1;
  }

  CommandResult cr;
  try {
    if (*solve_cmd) {
      std::vector<RunManifest> runs;
      for (const auto& path : manifests) {
        runs.push_back(manifest_from_json(read_json_file(path),
                                          fs::absolute(path).parent_path()));
      }
      if (runs.empty()) runs.emplace_back();
      for (std::size_t i = 0; i < runs.size(); ++i) {
        auto& r = runs[i];
        if (o_instance->count()) {
          r.instance_path = instance;
          r.generator.reset();
        }
        if (o_sigma->count()) r.solver.sigma = sigma;
        if (o_maxit->count()) r.solver.max_iter = max_iter;
        if (o_tol->count()) r.solver.tol_rmax = tol;
        if (o_seed->count()) r.solver.seed = seed;
        if (o_init->count()) r.solver.init = parse_init(init);
        if (o_tl->count()) r.solver.time_limit_secs = time_limit;
        if (o_te->count()) r.solver.trace_every = trace_every;
        if (o_out->count()) {
          r.out_dir = runs.size() == 1
                          ? out_dir
                          : (fs::path(out_dir) / fs::path(manifests[i]).stem()).string();
        }
      }
      cr = cmd_solve(runs, jobs, out);
    } else if (*diag_cmd) {
      std::string dir = run_dir;
      std::optional<Reports> reports;
      if (!diag_manifest.empty()) {
        const RunManifest m = manifest_from_json(
            read_json_file(diag_manifest), fs::absolute(diag_manifest).parent_path());
        if (dir.empty()) dir = m.out_dir;
        reports = m.reports;
      }
      if (dir.empty()) throw UsageError("diagnose: give --run DIR or --manifest");
      cr = cmd_diagnose(dir, out, reports);
    } else if (*eb_cmd) {
      if (o_z->count()) eb.z_path = z_path;
      if (o_zr->count()) eb.z_random = z_random;
      if (o_h->count()) eb.h_path = h_path;
      cr = cmd_eb_verify(eb, out);
    } else if (*gen_cmd) {
      cr = cmd_generate(gen, out);
    }
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (char& c : msg)
      if (c == '\n') c = ' ';
    err << "error: " << msg << "\n";
    return 1;
  }
  err << cr.status << "\n";
  return cr.code;
}

}  // namespace admmsdp::cli
