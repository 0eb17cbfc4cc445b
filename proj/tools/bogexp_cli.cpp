// Command-line front end: model ingestion, pipeline orchestration and
// reproducible reports.
//
// Exit codes: 0 success, 2 assertion failure, 3 resource guard, 4 config error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "bogexp/expansion.hpp"
#include "bogexp/io.hpp"
#include "bogexp/verify.hpp"

namespace fs = std::filesystem;
using namespace bogexp;

namespace {

struct RunConfig {
  std::string model_path;
  int nmax = 10;
  int level = 0;
  int order = 2;
  std::vector<int> Nlist{10, 14, 20, 28, 40};
  std::string out = "out";
  bool deterministic = true;
  std::uint64_t seed = 1;
};

ModelSpec bundled_fixture() {
  TorusSpec ts;
  ts.d = 1;
  ts.Kcut = 1;
  ts.vhat[{0}] = 1.5;
  ts.vhat[{1}] = 1.5;
  return build_torus_model(ts);
}

void validate_config(const RunConfig& cfg, bool needs_N) {
  if (cfg.nmax < 2 + 3 * cfg.order) {
    std::ostringstream os;
    os << "nmax = " << cfg.nmax << " violates nmax >= 2 + 3*order = " << 2 + 3 * cfg.order
       << ": the operator coefficients H_j reach across up to three excitation sectors per "
          "order, so smaller cutoffs clip the expansion";
    throw ConfigError("config-nmax", os.str());
  }
  if (needs_N) {
    for (int N : cfg.Nlist)
      if (N <= std::max(2, cfg.nmax)) {
        std::ostringstream os;
        os << "Nlist entry " << N << " must exceed max(2, nmax) = " << std::max(2, cfg.nmax);
        throw ConfigError("config-Nlist", os.str());
      }
  }
}

ModelSpec load_model(const RunConfig& cfg) {
  if (cfg.model_path.empty()) return bundled_fixture();
  return load_model_document(cfg.model_path);
}

void write_file(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ResourceError("write-failed", "cannot write " + path.string());
  out << text;
}

HartreeOptions hartree_opts(const RunConfig& cfg) {
  HartreeOptions opts;
  opts.seed = cfg.deterministic ? cfg.seed : std::random_device{}();
  return opts;
}

std::string hartree_report(const ModelSpec& model, const HartreeSolution& sol) {
  std::ostringstream os;
  char hex[32];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(model_hash(model)));
  os << "model_hash " << hex << "\n";
  os << "M " << model.M << "\n";
  os << "eH " << format_g17(sol.eH) << "\n";
  os << "muH " << format_g17(sol.muH) << "\n";
  os << "gH " << format_g17(sol.gH) << "\n";
  os << "iterations " << sol.iterations << "\n";
  os << "residual " << format_g17(sol.residual) << "\n";
  os << "phi";
  for (int i = 0; i < model.M; ++i)
    os << " " << format_g17(sol.phi(i).real()) << " " << format_g17(sol.phi(i).imag());
  os << "\neps";
  for (int i = 0; i < model.M; ++i) os << " " << format_g17(sol.eps(i));
  os << "\n";
  return os.str();
}

int cmd_hartree(const RunConfig& cfg) {
  ModelSpec model = load_model(cfg);
  HartreeSolution sol = hartree_solve(model, hartree_opts(cfg));
  const std::string report = hartree_report(model, sol);
  write_file(fs::path(cfg.out) / "hartree.txt", report);
  std::cout << report;
  return 0;
}

int cmd_bogoliubov(const RunConfig& cfg) {
  ModelSpec model = load_model(cfg);
  HartreeSolution sol = hartree_solve(model, hartree_opts(cfg));
  Kernels ker = build_kernels(sol, model);
  QuadraticSolution qs = diagonalize_quadratic(ker);
  auto basis = std::make_shared<const FockBasis>(ker.M - 1, cfg.nmax);
  FockOperator H0 = build_H0(build_Kops(ker, basis));
  SpectralData sd = spectral_data(H0, cfg.level + 2, 1e-8);
  std::ostringstream os;
  os << spectral_report(sd, qs);
  const auto match = quasiparticle_match(sd, qs.d, qs.E00);
  os << "quasiparticle_match";
  for (double dev : match) os << " " << format_g17(dev);
  os << "\n";
  WickReport w = quasifree_groundstate_check(sd);
  os << "wick_max_odd " << format_g17(w.max_odd) << "\n";
  os << "wick_max_pairing_residual " << format_g17(w.max_pairing_residual) << "\n";
  NumberBoundReport nb = number_bound_checks(sd, qs, H0);
  os << "number_moment_bound_ok " << (nb.moments_ok ? 1 : 0) << "\n";
  os << "number_comparison_min_eig " << format_g17(nb.comparison_min_eig) << "\n";
  const std::string report = os.str();
  write_file(fs::path(cfg.out) / "spectral.txt", report);
  std::cout << report;
  return 0;
}

int cmd_expand(const RunConfig& cfg, bool dump_operators) {
  ModelSpec model = load_model(cfg);
  HartreeSolution sol = hartree_solve(model, hartree_opts(cfg));
  Kernels ker = build_kernels(sol, model);
  ExpansionResult res = run_expansion(ker, cfg.level, cfg.order, cfg.nmax);
  const std::string report = expansion_report(res, model_hash(model));
  write_file(fs::path(cfg.out) / "expansion.txt", report);
  std::cout << report;
  if (dump_operators) {
    auto basis = std::make_shared<const FockBasis>(ker.M - 1, cfg.nmax);
    Kops ops = build_Kops(ker, basis);
    SpectralData sd = spectral_data(build_H0(ops), cfg.level + 1, 1e-8);
    PerturbationContext ctx(ops, std::move(sd), taylor_coefficients(16));
    for (int l = 0; l <= std::min(cfg.order, 3); ++l) {
      const Matrix P = projector_coefficient(ctx, cfg.level, l);
      FockOperator op(basis, P, infer_sector_shift(*basis, P));
      std::ostringstream name;
      name << "P" << l << "_n" << cfg.level << ".op";
      write_file(fs::path(cfg.out) / name.str(), dump_operator(op));
    }
  }
  return 0;
}

int cmd_rdm(const RunConfig& cfg) {
  ModelSpec model = load_model(cfg);
  HartreeSolution sol = hartree_solve(model, hartree_opts(cfg));
  Kernels ker = build_kernels(sol, model);
  auto basis = std::make_shared<const FockBasis>(ker.M - 1, cfg.nmax);
  Kops ops = build_Kops(ker, basis);
  SpectralData sd = spectral_data(build_H0(ops), cfg.level + 1, 1e-8);
  PerturbationContext ctx(ops, std::move(sd), taylor_coefficients(8));
  Rdm1Coefficients rdm = rdm1_coefficients(ctx, cfg.level);
  const Matrix g1_model = sol.B * rdm.gamma1 * sol.B.adjoint();

  std::ostringstream os;
  os << "gamma_tilde_1_0: delta |phi><phi| with delta "
     << format_g17(rdm.gamma0(0, 0).real()) << "\n";
  os << "gamma_tilde_1_1 (model basis, row major re im)\n";
  for (int i = 0; i < model.M; ++i) {
    for (int j = 0; j < model.M; ++j)
      os << format_g17(g1_model(i, j).real()) << " " << format_g17(g1_model(i, j).imag())
         << (j + 1 == model.M ? "\n" : " ");
  }
  if (model.is_torus() && cfg.level == 0) {
    const double veff = ker.K1(0, 0).real();
    double dev = 0;
    // closed form: -sum gamma_k^2 |phi><phi| + sum gamma_k^2 |phi_k><phi_k|
    Matrix closed = Matrix::Zero(model.M, model.M);
    double total = 0;
    for (int k = 1; k < model.M; ++k) {
      const double eps = ker.eps_exc(k - 1);
      const double vk = ker.K1(k - 1, k - 1).real();
      const double alpha = vk / (eps + vk + std::sqrt(eps * eps + 2 * eps * vk));
      const double g2 = alpha * alpha / (1 - alpha * alpha);
      closed(k, k) = g2;
      total += g2;
    }
    closed(0, 0) = -total;
    dev = (rdm.gamma1 - closed).cwiseAbs().maxCoeff();
    os << "torus_closed_form_deviation " << format_g17(dev) << "\n";
    (void)veff;
  }
  const std::string report = os.str();
  write_file(fs::path(cfg.out) / "rdm.txt", report);
  std::cout << report;
  return 0;
}

int cmd_verify(const RunConfig& cfg, const std::string& kind) {
  ModelSpec model = load_model(cfg);
  StudySettings settings;
  settings.nmax = cfg.nmax;
  std::vector<SlopeFit> fits;
  if (kind == "energy") {
    fits.push_back(energy_convergence_study(model, cfg.level, cfg.order, cfg.Nlist, settings));
  } else if (kind == "wavefunction") {
    fits.push_back(
        wavefunction_convergence_study(model, cfg.level, cfg.order, cfg.Nlist, settings));
  } else if (kind == "projector") {
    Matrix q = Matrix::Identity(model.M, model.M);
    HartreeSolution sol = hartree_solve(model, hartree_opts(cfg));
    q -= sol.phi * sol.phi.adjoint();
    ProjectorStudy st = projector_convergence_study(model, cfg.level, cfg.order, cfg.Nlist, {q},
                                                    {"q"}, settings);
    fits.push_back(st.trace_norm);
    fits.insert(fits.end(), st.observables.begin(), st.observables.end());
  } else {
    throw ConfigError("config-verify-kind", "verify kind must be energy|projector|wavefunction");
  }
  bool all_pass = true;
  for (size_t i = 0; i < fits.size(); ++i) {
    std::ostringstream base;
    base << "verify_" << kind << "_n" << cfg.level << "_a" << cfg.order;
    if (i > 0) base << "_obs" << i - 1;
    write_file(fs::path(cfg.out) / (base.str() + ".csv"), slope_fit_csv(fits[i]));
    write_file(fs::path(cfg.out) / (base.str() + ".json"), slope_fit_json(fits[i]));
    std::cout << slope_fit_json(fits[i]);
    all_pass = all_pass && fits[i].pass;
  }
  return all_pass ? 0 : 2;
}

int cmd_selftest(const RunConfig& cfg) {
  ModelSpec model = load_model(cfg);
  int failures = 0;
  auto check = [&](const std::string& what, bool ok, double value) {
    std::printf("[%s] %s (%.3e)\n", ok ? "ok" : "FAIL", what.c_str(), value);
    if (!ok) ++failures;
  };

  validate_model(model);
  HartreeSolution sol = hartree_solve(model, hartree_opts(cfg));
  Kernels ker = build_kernels(sol, model);
  check("hartree stationarity", sol.residual <= 1e-10, sol.residual);

  double wdev = 0;
  for (int mo = 0; mo < model.M; ++mo) {
    wdev = std::max(wdev, std::abs(ker.W(0, 0, 0, mo)));
    for (int no = 0; no < model.M; ++no) wdev = std::max(wdev, std::abs(ker.W(mo, 0, no, 0)));
  }
  check("kernel condensate entries vanish", wdev <= 1e-12, wdev);

  const int N = std::max(cfg.nmax + 2, 8);
  const double oracle = oracle_self_consistency(model, N);
  check("excitation Hamiltonian spectrum = H_N - N eH", oracle <= 1e-9, oracle);

  QuadraticSolution qs = diagonalize_quadratic(ker);
  auto basis = std::make_shared<const FockBasis>(ker.M - 1, cfg.nmax);
  Kops ops = build_Kops(ker, basis);
  FockOperator H0 = build_H0(ops);
  SpectralData sd = spectral_data(H0, 1, 1e-8);
  check("truncated ground energy near E00", std::abs(sd.levels[0].energy - qs.E00) <= 1e-6,
        std::abs(sd.levels[0].energy - qs.E00));

  WickReport w = quasifree_groundstate_check(sd);
  check("Wick odd moments vanish", w.max_odd <= 1e-9, w.max_odd);
  check("Wick pairing residual", w.max_pairing_residual <= 1e-6, w.max_pairing_residual);

  const CoefficientTable table = taylor_coefficients(10);
  double rdev = 0;
  for (int a = 0; a <= 3; ++a)
    rdev = std::max(rdev, remainder_identity_check(ops, table, a, N).max_deviation);
  check("remainder operator identity a<=3", rdev <= 1e-10, rdev);

  PerturbationContext ctx(ops, std::move(sd), taylor_coefficients(16));
  std::vector<Matrix> P;
  for (int l = 0; l <= 2; ++l) P.push_back(projector_coefficient(ctx, 0, l));
  double tdev = 0, cdev = 0;
  for (int l = 1; l <= 2; ++l) {
    tdev = std::max(tdev, std::abs(Complex(P[l].trace())));
    Matrix conv = Matrix::Zero(ctx.dim(), ctx.dim());
    for (int j = 0; j <= l; ++j) conv += P[j] * P[l - j];
    cdev = std::max(cdev, (conv - P[l]).cwiseAbs().maxCoeff());
  }
  check("Tr P_l = 0", tdev <= 1e-9, tdev);
  check("projector convolution identity", cdev <= 1e-9, cdev);

  if (ctx.sd().levels[0].multiplicity == 1) {
    const auto Etr = energy_coefficients(ctx, 0, 2);
    const auto Eit = energy_coefficients_iterative(ctx, 0, 2);
    const double edev = std::max(std::abs(Etr[1] - Eit[1]), std::abs(Etr[2] - Eit[2]));
    check("energy formula agreement", edev <= 1e-9, edev);
  }
  std::printf("selftest: %s\n", failures == 0 ? "all checks passed" : "FAILURES");
  return failures == 0 ? 0 : 2;
}

void apply_config_file(const std::string& path, RunConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config-file", "cannot open config file: " + path);
  std::string key;
  while (in >> key) {
    if (key == "model") in >> cfg.model_path;
    else if (key == "nmax") in >> cfg.nmax;
    else if (key == "level") in >> cfg.level;
    else if (key == "order") in >> cfg.order;
    else if (key == "out") in >> cfg.out;
    else if (key == "seed") in >> cfg.seed;
    else if (key == "deterministic") in >> cfg.deterministic;
    else if (key == "Nlist") {
      std::string list;
      in >> list;
      cfg.Nlist.clear();
      std::stringstream ss(list);
      std::string tok;
      while (std::getline(ss, tok, ',')) cfg.Nlist.push_back(std::stoi(tok));
    } else {
      throw ConfigError("config-key", "unknown config key: " + key);
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bogoliubov expansion toolkit: Hartree + quadratic diagonalization + "
               "Rayleigh-Schroedinger coefficients + exact-diagonalization verification"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::string config_file;
  std::string verify_kind;
  bool dump_operators = false;

  // flags shared by all subcommands; config file first, flags override
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_file, "config file (flags override its values)");
    sub->add_option("--model", cfg.model_path,
                    "model or torus document (bundled torus fixture when omitted)");
    sub->add_option("--nmax", cfg.nmax, "total-number cutoff of the excitation basis");
    sub->add_option("--level", cfg.level, "Bogoliubov level n");
    sub->add_option("--order", cfg.order, "expansion order a");
    sub->add_option("--Nlist", cfg.Nlist, "particle numbers for the verification studies")
        ->delimiter(',');
    sub->add_option("--out", cfg.out, "output directory");
    sub->add_flag("--deterministic,!--no-deterministic", cfg.deterministic,
                  "fixed-seed deterministic mode (default on)");
    sub->add_option("--seed", cfg.seed, "seed for the multi-start Hartree solver");
  };

  CLI::App* hartree = app.add_subcommand("hartree", "solve the Hartree problem");
  CLI::App* bog = app.add_subcommand("bogoliubov", "quadratic diagonalization and spectral data");
  CLI::App* expand = app.add_subcommand("expand", "energy/projector/wavefunction coefficients");
  expand->add_flag("--dump-operators", dump_operators,
                   "dump projector coefficients in the triplet operator format");
  CLI::App* verify = app.add_subcommand("verify", "convergence study against the ED oracle");
  verify->add_option("kind", verify_kind, "energy|projector|wavefunction")->required();
  CLI::App* rdm = app.add_subcommand("rdm", "one-particle density matrix coefficients");
  CLI::App* selftest = app.add_subcommand("selftest", "full invariant suite on one model");
  for (CLI::App* sub : {hartree, bog, expand, verify, rdm, selftest}) add_common(sub);

  CLI11_PARSE(app, argc, argv);

  try {
    if (!config_file.empty()) {
      RunConfig from_file = cfg;
      apply_config_file(config_file, from_file);
      // flags win: reparse flags on top of file values
      RunConfig merged = from_file;
      for (CLI::App* sub : {hartree, bog, expand, verify, rdm, selftest}) {
        if (!sub->parsed()) continue;
        if (sub->count("--model")) merged.model_path = cfg.model_path;
        if (sub->count("--nmax")) merged.nmax = cfg.nmax;
        if (sub->count("--level")) merged.level = cfg.level;
        if (sub->count("--order")) merged.order = cfg.order;
        if (sub->count("--Nlist")) merged.Nlist = cfg.Nlist;
        if (sub->count("--out")) merged.out = cfg.out;
        if (sub->count("--deterministic") || sub->count("--no-deterministic"))
          merged.deterministic = cfg.deterministic;
        if (sub->count("--seed")) merged.seed = cfg.seed;
      }
      cfg = merged;
    }
    validate_config(cfg, verify->parsed());

    if (hartree->parsed()) return cmd_hartree(cfg);
    if (bog->parsed()) return cmd_bogoliubov(cfg);
    if (expand->parsed()) return cmd_expand(cfg, dump_operators);
    if (verify->parsed()) return cmd_verify(cfg, verify_kind);
    if (rdm->parsed()) return cmd_rdm(cfg);
    if (selftest->parsed()) return cmd_selftest(cfg);
  } catch (const ConfigError& e) {
    std::cerr << "config error [" << e.reason() << "]: " << e.what() << "\n";
    return 4;
  } catch (const ResourceError& e) {
    std::cerr << "resource error [" << e.reason() << "]: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error [" << e.reason() << "]: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 4;
}
