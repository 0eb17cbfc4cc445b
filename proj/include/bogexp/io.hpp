#pragma once

#include <iosfwd>
#include <string>

#include "bogexp/bogoliubov.hpp"
#include "bogexp/fock.hpp"
#include "bogexp/model.hpp"
#include "bogexp/verify.hpp"

namespace bogexp {

// All floating-point output uses 17 significant digits so golden files and
// determinism checks are byte-stable.
std::string format_g17(double x);

std::string serialize_model(const ModelSpec& model);
ModelSpec parse_model(std::istream& in);

std::string serialize_torus(const TorusSpec& spec);
TorusSpec parse_torus(std::istream& in);

// Reads either document kind; a torus document is expanded to its ModelSpec.
ModelSpec load_model_document(const std::string& path);

// FNV-1a over the canonical serialization.
std::uint64_t model_hash(const ModelSpec& model);

// Header {modes, nmax, sector_shift}, then triplets (row, col, re, im)
// sorted by (row, col).
std::string dump_operator(const FockOperator& op, double tol = 1e-14);

std::string spectral_report(const SpectralData& sd, const QuadraticSolution& qs);

std::string slope_fit_csv(const SlopeFit& fit);
std::string slope_fit_json(const SlopeFit& fit);

std::string expansion_report(const ExpansionResult& res, std::uint64_t model_hash);

}  // namespace bogexp
