#include "bogexp/io.hpp"

#include <cctype>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace bogexp {

std::string format_g17(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

std::string serialize_model(const ModelSpec& model) {
  std::ostringstream os;
  os << "bogexp-model v1\n";
  std::string label = model.label.empty() ? "-" : model.label;
  for (char& c : label)
    if (std::isspace(static_cast<unsigned char>(c))) c = '_';
  os << "label " << label << "\n";
  os << "M " << model.M << "\n";
  os << "positive_type " << (model.positive_type ? 1 : 0) << "\n";
  os << "torus_dim " << model.torus_dim << "\n";
  if (model.torus_dim > 0) {
    os << "momenta";
    for (const auto& k : model.momenta)
      for (int c : k) os << " " << c;
    os << "\n";
  }
  os << "T\n";
  for (int i = 0; i < model.M; ++i) {
    for (int j = 0; j < model.M; ++j) {
      os << format_g17(model.T(i, j).real()) << " " << format_g17(model.T(i, j).imag());
      os << (j + 1 == model.M ? "\n" : " ");
    }
  }
  std::ostringstream vos;
  int nnz = 0;
  for (int m = 0; m < model.M; ++m)
    for (int n = 0; n < model.M; ++n)
      for (int p = 0; p < model.M; ++p)
        for (int q = 0; q < model.M; ++q) {
          const Complex v = model.V(m, n, p, q);
          if (v != Complex{0, 0}) {
            vos << m << " " << n << " " << p << " " << q << " " << format_g17(v.real()) << " "
                << format_g17(v.imag()) << "\n";
            ++nnz;
          }
        }
  os << "V " << nnz << "\n" << vos.str() << "end\n";
  return os.str();
}

ModelSpec parse_model(std::istream& in) {
  std::string tok, version;
  in >> tok >> version;
  if (tok != "bogexp-model" || version != "v1")
    throw ConfigError("model-parse", "not a bogexp-model v1 document");
  ModelSpec model;
  in >> tok;
  if (tok != "label") throw ConfigError("model-parse", "expected label");
  in >> model.label;
  if (model.label == "-") model.label.clear();
  in >> tok >> model.M;
  if (tok != "M" || model.M <= 0) throw ConfigError("model-parse", "bad mode count");
  int flag = 0;
  in >> tok >> flag;
  model.positive_type = flag != 0;
  in >> tok >> model.torus_dim;
  if (model.torus_dim > 0) {
    in >> tok;  // "momenta"
    model.momenta.resize(model.M, std::vector<int>(model.torus_dim));
    for (int m = 0; m < model.M; ++m)
      for (int c = 0; c < model.torus_dim; ++c) in >> model.momenta[m][c];
  }
  in >> tok;
  if (tok != "T") throw ConfigError("model-parse", "expected T block");
  model.T = Matrix(model.M, model.M);
  for (int i = 0; i < model.M; ++i)
    for (int j = 0; j < model.M; ++j) {
      double re, im;
      in >> re >> im;
      model.T(i, j) = Complex(re, im);
    }
  int nnz = 0;
  in >> tok >> nnz;
  if (tok != "V") throw ConfigError("model-parse", "expected V block");
  model.V = Tensor4(model.M);
  for (int k = 0; k < nnz; ++k) {
    int m, n, p, q;
    double re, im;
    in >> m >> n >> p >> q >> re >> im;
    if (!in) throw ConfigError("model-parse", "truncated V block");
    model.V(m, n, p, q) = Complex(re, im);
  }
  in >> tok;
  if (tok != "end") throw ConfigError("model-parse", "missing end marker");
  return model;
}

std::string serialize_torus(const TorusSpec& spec) {
  std::ostringstream os;
  os << "bogexp-torus v1\n";
  os << "d " << spec.d << "\n";
  os << "Kcut " << spec.Kcut << "\n";
  os << "vhat " << spec.vhat.size() << "\n";
  for (const auto& [k, v] : spec.vhat) {
    for (int c : k) os << c << " ";
    os << format_g17(v) << "\n";
  }
  os << "end\n";
  return os.str();
}

TorusSpec parse_torus(std::istream& in) {
  std::string tok, version;
  in >> tok >> version;
  if (tok != "bogexp-torus" || version != "v1")
    throw ConfigError("torus-parse", "not a bogexp-torus v1 document");
  TorusSpec spec;
  in >> tok >> spec.d;
  if (tok != "d") throw ConfigError("torus-parse", "expected d");
  in >> tok >> spec.Kcut;
  if (tok != "Kcut") throw ConfigError("torus-parse", "expected Kcut");
  size_t count = 0;
  in >> tok >> count;
  if (tok != "vhat") throw ConfigError("torus-parse", "expected vhat block");
  for (size_t i = 0; i < count; ++i) {
    std::vector<int> k(spec.d);
    for (int c = 0; c < spec.d; ++c) in >> k[c];
    double v;
    in >> v;
    if (!in) throw ConfigError("torus-parse", "truncated vhat block");
    spec.vhat[k] = v;
  }
  in >> tok;
  if (tok != "end") throw ConfigError("torus-parse", "missing end marker");
  return spec;
}

ModelSpec load_model_document(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("model-file", "cannot open model document: " + path);
  std::string head;
  in >> head;
  in.seekg(0);
  if (head == "bogexp-torus") return build_torus_model(parse_torus(in));
  if (head == "bogexp-model") {
    ModelSpec model = parse_model(in);
    validate_model(model);
    return model;
  }
  throw ConfigError("model-file", "unrecognized document header: " + head);
}

std::uint64_t model_hash(const ModelSpec& model) {
  const std::string text = serialize_model(model);
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string dump_operator(const FockOperator& op, double tol) {
  std::ostringstream os;
  os << "bogexp-operator v1\n";
  os << "modes " << op.basis->modes() << "\n";
  os << "nmax " << op.basis->nmax() << "\n";
  os << "sector_shift";
  for (int s : op.sector_shift) os << " " << s;
  os << "\n";
  std::ostringstream body;
  int nnz = 0;
  for (int r = 0; r < op.mat.rows(); ++r)
    for (int c = 0; c < op.mat.cols(); ++c) {
      const Complex v = op.mat(r, c);
      if (std::abs(v) > tol) {
        body << r << " " << c << " " << format_g17(v.real()) << " " << format_g17(v.imag())
             << "\n";
        ++nnz;
      }
    }
  os << "nnz " << nnz << "\n" << body.str() << "end\n";
  return os.str();
}

std::string spectral_report(const SpectralData& sd, const QuadraticSolution& qs) {
  std::ostringstream os;
  os << "quasiparticle energies:";
  for (int i = 0; i < qs.d.size(); ++i) os << " " << format_g17(qs.d(i));
  os << "\nE00 " << format_g17(qs.E00) << "\n";
  os << "levels " << sd.levels.size() << "\n";
  for (size_t n = 0; n < sd.levels.size(); ++n) {
    os << "level " << n << " energy " << format_g17(sd.levels[n].energy) << " multiplicity "
       << sd.levels[n].multiplicity << " gap " << format_g17(sd.gaps[n]) << " contour_radius "
       << format_g17(sd.contour_radius[n]) << "\n";
  }
  return os.str();
}

std::string slope_fit_csv(const SlopeFit& fit) {
  std::ostringstream os;
  os << "# " << fit.criterion << "\n";
  os << "N,lambda,error,truncation_floor\n";
  for (const auto& row : fit.table) {
    os << static_cast<int>(row[0]) << "," << format_g17(row[1]) << "," << format_g17(row[2])
       << "," << format_g17(row[3]) << "\n";
  }
  return os.str();
}

std::string slope_fit_json(const SlopeFit& fit) {
  nlohmann::ordered_json j;
  j["criterion"] = fit.criterion;
  j["slope"] = fit.slope;
  j["intercept"] = fit.intercept;
  j["r2"] = fit.r2;
  j["pass"] = fit.pass;
  j["exact_zero"] = fit.exact_zero;
  j["points_used"] = fit.lambdas.size();
  return j.dump(2) + "\n";
}

std::string expansion_report(const ExpansionResult& res, std::uint64_t hash) {
  std::ostringstream os;
  char hex[32];
  std::snprintf(hex, sizeof(hex), "%016" PRIx64, hash);
  os << "model_hash " << hex << "\n";
  os << "level " << res.level << "\n";
  os << "order " << res.order << "\n";
  os << "nmax " << res.nmax << "\n";
  os << "multiplicity " << res.delta0 << "\n";
  os << "provenance " << res.provenance << "\n";
  for (size_t l = 0; l < res.E.size(); ++l) {
    os << "E_" << l << " " << format_g17(res.E[l]) << " truncation_delta "
       << format_g17(res.E_delta[l]) << "\n";
  }
  os << "truncation_flagged " << (res.truncation_flagged ? 1 : 0) << "\n";
  for (size_t l = 0; l < res.alpha.size(); ++l)
    os << "alpha_" << l << " " << format_g17(res.alpha[l]) << "\n";
  for (size_t l = 0; l < res.trace_Pl.size(); ++l) {
    os << "abs_trace_P" << l + 1 << " " << format_g17(res.trace_Pl[l]) << " hermiticity_dev "
       << format_g17(res.hermiticity_Pl[l]) << "\n";
  }
  return os.str();
}

}  // namespace bogexp
