#include "thzloc/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace thzloc {

namespace {

constexpr double kRankTolerance = 1e-10;
constexpr double kExactFit = 1e-12;

double frobenius_sq(const CVectorSeq& r) {
  double s = 0.0;
  for (const CVector& v : r) s += v.squaredNorm();
  return s;
}

void check_inputs(const CVectorSeq& y, const Sensing& sensing, const PolarDictionary& dict) {
  if (sensing.mats.empty()) throw DimensionError("no sensing matrices");
  if (y.size() != dict.subcarriers()) throw DimensionError("subcarrier count mismatch");
  if (!sensing.is_shared() && sensing.mats.size() != y.size()) {
    throw DimensionError("sensing matrix count mismatch");
  }
  for (std::size_t m = 0; m < y.size(); ++m) {
    const CMatrix& a = sensing.at(m);
    if (a.cols() != static_cast<Eigen::Index>(dict.rows()) || a.rows() != y[m].size()) {
      throw DimensionError("sensing matrix shape mismatch");
    }
  }
}

// Index of the norm vector that serves subcarrier m.
std::size_t norm_slot(const Sensing& sensing, const PolarDictionary& dict, std::size_t m) {
  return (sensing.is_shared() && !dict.frequency_selective()) ? 0 : m;
}

RVector sensed_norms_at(const Sensing& sensing, const PolarDictionary& dict, std::size_t m,
                        std::size_t first_col) {
  const CMatrix a = dict.atoms(m).rightCols(static_cast<Eigen::Index>(dict.size() - first_col));
  return (sensing.at(m) * a).colwise().norm().transpose();
}

}  // namespace

void OmpConfig::validate() const {
  if (n_select < 1) throw ConfigError("n_select must be at least 1");
  if (!(stop_ratio > 0.0 && stop_ratio <= 1.0)) throw ConfigError("stop_ratio must lie in (0, 1]");
  if (max_iters < 1) throw ConfigError("max_iters must be at least 1");
}

RVector correlation_energy(const CMatrixSeq& w_tilde, const CVectorSeq& residual) {
  if (w_tilde.size() != residual.size()) throw DimensionError("subcarrier count mismatch");
  if (w_tilde.empty()) return {};
  RVector out = RVector::Zero(w_tilde.front().cols());
  for (std::size_t m = 0; m < w_tilde.size(); ++m) {
    if (w_tilde[m].rows() != residual[m].size() || w_tilde[m].cols() != out.size()) {
      throw DimensionError("sensing matrix shape mismatch");
    }
    out += (w_tilde[m].adjoint() * residual[m]).cwiseAbs2();
  }
  return out;
}

std::vector<RVector> sensed_column_norms(const Sensing& sensing, const PolarDictionary& dict) {
  const std::size_t slots =
      (sensing.is_shared() && !dict.frequency_selective()) ? 1 : dict.subcarriers();
  std::vector<RVector> out;
  out.reserve(slots);
  for (std::size_t m = 0; m < slots; ++m) out.push_back(sensed_norms_at(sensing, dict, m, 0));
  return out;
}

RVector correlation_energy(const Sensing& sensing, const PolarDictionary& dict,
                           const CVectorSeq& residual, const std::vector<RVector>* norms) {
  RVector out = RVector::Zero(static_cast<Eigen::Index>(dict.size()));
  for (std::size_t m = 0; m < residual.size(); ++m) {
    const CVector z = sensing.at(m).adjoint() * residual[m];
    RVector e = dict.correlate(m, z).cwiseAbs2();
    if (norms != nullptr) {
      const RVector& nm = (*norms)[norm_slot(sensing, dict, m)];
      for (Eigen::Index k = 0; k < e.size(); ++k) {
        e(k) = nm(k) > 0.0 ? e(k) / (nm(k) * nm(k)) : 0.0;
      }
    }
    out += e;
  }
  return out;
}

std::size_t first_iteration_index(const CVectorSeq& y, const Sensing& sensing,
                                  const PolarDictionary& dict, bool normalize,
                                  const std::vector<RVector>* norms) {
  check_inputs(y, sensing, dict);
  std::vector<RVector> own;
  if (normalize && norms == nullptr) {
    own = sensed_column_norms(sensing, dict);
    norms = &own;
  }
  const RVector e = correlation_energy(sensing, dict, y, normalize ? norms : nullptr);
  Eigen::Index best = 0;
  e.maxCoeff(&best);
  return static_cast<std::size_t>(best);
}

EstimationResult project_on_support(const CVectorSeq& y, const Sensing& sensing,
                                    const PolarDictionary& dict,
                                    const std::vector<std::size_t>& support) {
  EstimationResult out;
  out.support = support;
  out.coeffs.reserve(y.size());
  out.h_hat.reserve(y.size());
  for (std::size_t m = 0; m < y.size(); ++m) {
    const CMatrix d = dict.columns(m, support);
    if (support.empty()) {
      out.coeffs.emplace_back(0);
      out.h_hat.push_back(CVector::Zero(static_cast<Eigen::Index>(dict.rows())));
      continue;
    }
    CMatrix b = sensing.at(m) * d;
    // Equilibrate the columns so the rank threshold does not depend on their scale.
    RVector scale = b.colwise().norm().transpose();
    for (Eigen::Index j = 0; j < scale.size(); ++j) {
      if (scale(j) > 0.0) {
        b.col(j) /= scale(j);
      } else {
        scale(j) = 1.0;
      }
    }
    Eigen::BDCSVD<CMatrix> svd(b, Eigen::ComputeThinU | Eigen::ComputeThinV);
    svd.setThreshold(kRankTolerance);
    if (svd.rank() < b.cols()) out.rank_deficient = true;
    CVector c = svd.solve(y[m]).cwiseQuotient(scale.cast<Complex>());
    out.h_hat.push_back(d * c);
    out.coeffs.push_back(std::move(c));
  }
  return out;
}

EstimationResult gmmv_omp(const CVectorSeq& y, const Sensing& sensing, const PolarDictionary& dict_in,
                          const OmpConfig& cfg) {
  cfg.validate();
  check_inputs(y, sensing, dict_in);
  PolarDictionary dict = dict_in;

  const double y_norm = std::sqrt(frobenius_sq(y));
  if (y_norm == 0.0) {
    EstimationResult empty = project_on_support(y, sensing, dict, {});
    empty.iterations_run = 1;
    empty.residual_history.push_back(0.0);
    return empty;
  }

  std::vector<RVector> norms;
  if (cfg.normalize_columns) {
    norms = cfg.column_norms != nullptr ? *cfg.column_norms : sensed_column_norms(sensing, dict);
    for (const RVector& n : norms) {
      if (n.size() != static_cast<Eigen::Index>(dict.size())) {
        throw DimensionError("column norms do not match the dictionary");
      }
    }
  }
  const std::vector<RVector>* norm_ptr = cfg.normalize_columns ? &norms : nullptr;

  CVectorSeq residual = y;
  double previous = y_norm;
  std::vector<std::size_t> support;
  std::vector<char> chosen(dict.size(), 0);
  EstimationResult result;
  std::optional<std::size_t> coarse;
  std::optional<AtomParams> coarse_params;
  std::optional<std::size_t> appended;

  for (std::size_t it = 1; it <= cfg.max_iters; ++it) {
    RVector energy = correlation_energy(sensing, dict, residual, norm_ptr);
    if (it == 1) {
      Eigen::Index best = 0;
      energy.maxCoeff(&best);
      coarse = static_cast<std::size_t>(best);
      coarse_params = dict.params(*coarse);
      if (cfg.hook) {
        if (auto refined = cfg.hook(*coarse, dict); refined && refined->range) {
          dict = dict.with_atom(refined->theta, *refined->range);
          appended = dict.size() - 1;
          chosen.push_back(0);
          if (cfg.normalize_columns) {
            for (std::size_t s = 0; s < norms.size(); ++s) {
              const RVector extra = sensed_norms_at(sensing, dict, s, *appended);
              RVector grown(static_cast<Eigen::Index>(dict.size()));
              grown << norms[s], extra;
              norms[s] = std::move(grown);
            }
          }
          energy = correlation_energy(sensing, dict, residual, norm_ptr);
        }
      }
    }

    std::vector<std::size_t> order;
    order.reserve(dict.size());
    for (std::size_t k = 0; k < dict.size(); ++k) {
      if (!chosen[k] && energy(static_cast<Eigen::Index>(k)) > 0.0) order.push_back(k);
    }
    const std::size_t take = std::min(cfg.n_select, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        const double ea = energy(static_cast<Eigen::Index>(a));
                        const double eb = energy(static_cast<Eigen::Index>(b));
                        return ea != eb ? ea > eb : a < b;
                      });
    if (take == 0) break;
    for (std::size_t i = 0; i < take; ++i) {
      support.push_back(order[i]);
      chosen[order[i]] = 1;
    }

    EstimationResult proj = project_on_support(y, sensing, dict, support);
    for (std::size_t m = 0; m < y.size(); ++m) {
      residual[m] = y[m] - sensing.at(m) * proj.h_hat[m];
    }
    const double current = std::sqrt(frobenius_sq(residual));
    proj.residual_history = std::move(result.residual_history);
    proj.residual_history.push_back(current);
    proj.rank_deficient = proj.rank_deficient || result.rank_deficient;
    proj.iterations_run = it;
    result = std::move(proj);

    if (current <= kExactFit * y_norm) break;
    if (current / previous > cfg.stop_ratio) break;
    previous = current;
  }

  result.coarse_index = coarse;
  result.coarse_params = coarse_params;
  result.appended_index = appended;
  if (result.support.empty()) {
    EstimationResult empty = project_on_support(y, sensing, dict, {});
    empty.iterations_run = std::max<std::size_t>(1, result.iterations_run);
    empty.coarse_index = coarse;
    empty.coarse_params = coarse_params;
    return empty;
  }
  return result;
}

std::vector<std::size_t> genie_support(const PolarDictionary& dict,
                                       const std::vector<PathComponent>& paths) {
  const double kc = dict.grid().center_wavenumber();
  CMatrix center(static_cast<Eigen::Index>(dict.rows()), static_cast<Eigen::Index>(dict.size()));
  for (std::size_t k = 0; k < dict.size(); ++k) {
    center.col(static_cast<Eigen::Index>(k)) = dict.atom_at(dict.params(k), kc);
  }
  std::vector<std::size_t> out;
  for (const PathComponent& p : paths) {
    const CVector b = near_steering<double>(static_cast<Eigen::Index>(dict.rows()),
                                            dict.array().spacing(), kc, p.theta, p.r_last_hop);
    Eigen::Index best = 0;
    (center.adjoint() * b).cwiseAbs().maxCoeff(&best);
    const auto k = static_cast<std::size_t>(best);
    if (std::find(out.begin(), out.end(), k) == out.end()) out.push_back(k);
  }
  return out;
}

EstimationResult genie_ls(const CVectorSeq& y, const Sensing& sensing, const PolarDictionary& dict,
                          const std::vector<PathComponent>& paths) {
  check_inputs(y, sensing, dict);
  EstimationResult out = project_on_support(y, sensing, dict, genie_support(dict, paths));
  out.iterations_run = 1;
  double r = 0.0;
  for (std::size_t m = 0; m < y.size(); ++m) r += (y[m] - sensing.at(m) * out.h_hat[m]).squaredNorm();
  out.residual_history.push_back(std::sqrt(r));
  return out;
}

double nmse_db(const CVectorSeq& h_true, const CVectorSeq& h_hat) {
  if (h_true.size() != h_hat.size()) throw DimensionError("subcarrier count mismatch");
  double err = 0.0;
  double ref = 0.0;
  for (std::size_t m = 0; m < h_true.size(); ++m) {
    if (h_true[m].size() != h_hat[m].size()) throw DimensionError("channel length mismatch");
    err += (h_true[m] - h_hat[m]).squaredNorm();
    ref += h_true[m].squaredNorm();
  }
  if (ref == 0.0) throw DomainError("true channel is zero");
  if (err == 0.0) return -300.0;
  return std::max(-300.0, 10.0 * std::log10(err / ref));
}

}  // namespace thzloc
