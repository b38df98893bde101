#include "thzloc/dictionary.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "thzloc/rng.hpp"

namespace thzloc {

namespace {

constexpr char kCacheMagic[8] = {'T', 'H', 'Z', 'D', 'I', 'C', 'T', '1'};

void check_spec(std::size_t rings, std::size_t redundancy) {
  if (rings == 0) throw ConfigError("dictionary needs at least one ring");
  if (redundancy == 0) throw ConfigError("redundancy must be positive");
}

std::uint64_t hash_double(std::uint64_t h, double v) {
  std::uint64_t bits = 0;
  std::memcpy(&bits, &v, sizeof bits);
  return splitmix64(h ^ bits);
}

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
bool read_pod(std::istream& is, T& v) {
  return static_cast<bool>(is.read(reinterpret_cast<char*>(&v), sizeof v));
}

}  // namespace

PolarDictionary::PolarDictionary(ArrayGeometry array, SubcarrierGrid grid, DictionarySpec spec,
                                 std::vector<AtomParams> base_params, bool frequency_selective,
                                 bool lazy) {
  auto base = std::make_shared<Base>();
  base->array = std::move(array);
  base->grid = std::move(grid);
  base->spec = spec;
  base->params = std::move(base_params);
  base->frequency_selective = frequency_selective;
  base->lazy = lazy;
  base_ = base;
  if (!lazy) {
    const std::size_t count = frequency_selective ? base->grid.size() : 1;
    base->stored.reserve(count);
    for (std::size_t m = 0; m < count; ++m) base->stored.push_back(generate_base(m));
  }
  extra_atoms_ = std::make_shared<const std::vector<CMatrix>>();
}

PolarDictionary PolarDictionary::from_stored(ArrayGeometry array, SubcarrierGrid grid,
                                             DictionarySpec spec,
                                             std::vector<AtomParams> base_params,
                                             bool frequency_selective,
                                             std::vector<CMatrix> stored) {
  auto base = std::make_shared<Base>();
  base->array = std::move(array);
  base->grid = std::move(grid);
  base->spec = spec;
  base->params = std::move(base_params);
  base->frequency_selective = frequency_selective;
  base->stored = std::move(stored);
  const std::size_t count = frequency_selective ? base->grid.size() : 1;
  if (base->stored.size() != count) throw DimensionError("stored atom count mismatch");
  for (const CMatrix& s : base->stored) {
    if (s.rows() != static_cast<Eigen::Index>(base->array.size()) ||
        s.cols() != static_cast<Eigen::Index>(base->params.size())) {
      throw DimensionError("stored atom shape mismatch");
    }
  }
  PolarDictionary out;
  out.base_ = base;
  out.extra_atoms_ = std::make_shared<const std::vector<CMatrix>>();
  return out;
}

const AtomParams& PolarDictionary::params(std::size_t k) const {
  if (k < base_size()) return base_->params[k];
  if (k < size()) return extra_params_[k - base_size()];
  throw DomainError("dictionary column out of range");
}

double PolarDictionary::atom_wavenumber(std::size_t m) const {
  return frequency_selective() ? grid().wavenumber(m) : grid().center_wavenumber();
}

CVector PolarDictionary::atom_at(const AtomParams& p, double wavenumber) const {
  const auto n = static_cast<Eigen::Index>(rows());
  const double d = array().spacing();
  if (p.far_field()) return far_steering<double>(n, d, wavenumber, p.theta);
  return near_steering<double>(n, d, wavenumber, p.theta, *p.range);
}

CMatrix PolarDictionary::generate_base(std::size_t m) const {
  const double k = atom_wavenumber(m);
  CMatrix out(static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(base_size()));
  for (std::size_t c = 0; c < base_size(); ++c) {
    out.col(static_cast<Eigen::Index>(c)) = atom_at(base_->params[c], k);
  }
  return out;
}

const CMatrix& PolarDictionary::stored(std::size_t m) const {
  return base_->stored[frequency_selective() ? m : 0];
}

CVector PolarDictionary::atom(std::size_t k, std::size_t m) const {
  if (m >= subcarriers()) throw DomainError("subcarrier out of range");
  if (k >= size()) throw DomainError("dictionary column out of range");
  if (k >= base_size()) {
    const std::size_t slot = frequency_selective() ? m : 0;
    return (*extra_atoms_)[slot].col(static_cast<Eigen::Index>(k - base_size()));
  }
  if (lazy()) return atom_at(base_->params[k], atom_wavenumber(m));
  return stored(m).col(static_cast<Eigen::Index>(k));
}

CMatrix PolarDictionary::atoms(std::size_t m) const {
  if (m >= subcarriers()) throw DomainError("subcarrier out of range");
  const auto n = static_cast<Eigen::Index>(rows());
  const auto kb = static_cast<Eigen::Index>(base_size());
  CMatrix out(n, static_cast<Eigen::Index>(size()));
  out.leftCols(kb) = lazy() ? generate_base(m) : stored(m);
  if (!extra_params_.empty()) {
    const std::size_t slot = frequency_selective() ? m : 0;
    out.rightCols(static_cast<Eigen::Index>(extra_params_.size())) = (*extra_atoms_)[slot];
  }
  return out;
}

CMatrix PolarDictionary::columns(std::size_t m, const std::vector<std::size_t>& idx) const {
  CMatrix out(static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = atom(idx[i], m);
  return out;
}

CVector PolarDictionary::correlate(std::size_t m, const CVector& z) const {
  if (z.size() != static_cast<Eigen::Index>(rows())) throw DimensionError("correlate: length");
  if (lazy()) return atoms(m).adjoint() * z;
  CVector out(static_cast<Eigen::Index>(size()));
  const auto kb = static_cast<Eigen::Index>(base_size());
  out.head(kb).noalias() = stored(m).adjoint() * z;
  if (!extra_params_.empty()) {
    const std::size_t slot = frequency_selective() ? m : 0;
    out.tail(static_cast<Eigen::Index>(extra_params_.size())).noalias() =
        (*extra_atoms_)[slot].adjoint() * z;
  }
  return out;
}

PolarDictionary PolarDictionary::with_atom(double theta, double range) const {
  if (!(theta > -1.0 && theta < 1.0)) throw DomainError("appended angle outside (-1, 1)");
  if (!(range > 0.0)) throw DomainError("appended range must be positive");
  PolarDictionary out = *this;
  const AtomParams p{theta, range};
  out.extra_params_.push_back(p);
  const std::size_t slots = frequency_selective() ? subcarriers() : 1;
  auto extra = std::make_shared<std::vector<CMatrix>>();
  extra->reserve(slots);
  const auto n = static_cast<Eigen::Index>(rows());
  const auto e = static_cast<Eigen::Index>(out.extra_params_.size());
  for (std::size_t s = 0; s < slots; ++s) {
    CMatrix block(n, e);
    if (e > 1) block.leftCols(e - 1) = (*extra_atoms_)[s];
    block.col(e - 1) = atom_at(p, atom_wavenumber(s));
    extra->push_back(std::move(block));
  }
  out.extra_atoms_ = std::move(extra);
  return out;
}

double ring_scale(const ArrayGeometry& array, const SubcarrierGrid& grid, double hbar) {
  const SubcarrierGrid center(grid.center_frequency(), 0.0, 1);
  return effective_rayleigh(array, center, 0, 0.0, hbar).distance;
}

std::vector<AtomParams> polar_grid(std::size_t num_elements, std::size_t rings,
                                   std::size_t redundancy, double scale) {
  check_spec(rings, redundancy);
  const double count = static_cast<double>(redundancy * num_elements);
  std::vector<AtomParams> out;
  out.reserve(redundancy * num_elements * rings);
  for (std::size_t n = 0; n < redundancy * num_elements; ++n) {
    const double theta = (2.0 * static_cast<double>(n) - count + 1.0) / count;
    for (std::size_t s = 0; s < rings; ++s) {
      if (s == 0) {
        out.push_back({theta, std::nullopt});
      } else {
        out.push_back({theta, 2.0 * scale * (1.0 - theta * theta) / static_cast<double>(s)});
      }
    }
  }
  return out;
}

PolarDictionary build_fsprd(const ArrayGeometry& array, const SubcarrierGrid& grid,
                            std::size_t rings, std::size_t redundancy, double hbar, bool lazy) {
  check_spec(rings, redundancy);
  DictionarySpec spec{DictionaryKind::kFsprd, rings, redundancy, hbar,
                      rings > 1 ? ring_scale(array, grid, hbar) : 0.0};
  return PolarDictionary(array, grid, spec, polar_grid(array.size(), rings, redundancy, spec.ring_scale),
                         true, lazy);
}

PolarDictionary build_ptm(const ArrayGeometry& array, const SubcarrierGrid& grid,
                          std::size_t rings, std::size_t redundancy, double hbar) {
  check_spec(rings, redundancy);
  DictionarySpec spec{DictionaryKind::kPtm, rings, redundancy, hbar,
                      rings > 1 ? ring_scale(array, grid, hbar) : 0.0};
  return PolarDictionary(array, grid, spec, polar_grid(array.size(), rings, redundancy, spec.ring_scale),
                         false, false);
}

PolarDictionary build_ftm(const ArrayGeometry& array, const SubcarrierGrid& grid) {
  DictionarySpec spec{DictionaryKind::kFtm, 1, 1, 0.0, 0.0};
  return PolarDictionary(array, grid, spec, polar_grid(array.size(), 1, 1, 0.0), false, false);
}

PolarDictionary build_partial(const ArrayGeometry& array, const SubcarrierGrid& grid,
                              std::vector<AtomParams> params) {
  DictionarySpec spec{DictionaryKind::kPartial, 1, 1, 0.0, 0.0};
  return PolarDictionary(array, grid, spec, std::move(params), true, false);
}

std::pair<PolarDictionary, std::size_t> append_atom(const PolarDictionary& dict, double theta,
                                                    double range) {
  PolarDictionary out = dict.with_atom(theta, range);
  return {out, out.size() - 1};
}

AtomParams grid_params(const PolarDictionary& dict, std::size_t one_based_index) {
  if (one_based_index < 1 || one_based_index > dict.size()) {
    throw DomainError("grid index out of range");
  }
  const std::size_t k = one_based_index - 1;
  if (k >= dict.base_size() || dict.spec().kind == DictionaryKind::kPartial) return dict.params(k);
  const std::size_t S = dict.spec().rings;
  const double count = static_cast<double>(dict.spec().redundancy * dict.rows());
  const std::size_t block = (one_based_index + S - 1) / S;
  AtomParams out = dict.params(k);
  out.theta = (2.0 * static_cast<double>(block) - 1.0) / count - 1.0;
  return out;
}

std::uint64_t dictionary_key(const ArrayGeometry& array, const SubcarrierGrid& grid,
                             const DictionarySpec& spec) {
  std::uint64_t h = derive_seed({array.size(), static_cast<std::uint64_t>(spec.kind), spec.rings,
                                 spec.redundancy, grid.total(), grid.size()});
  h = hash_double(h, array.spacing());
  h = hash_double(h, grid.center_frequency());
  h = hash_double(h, grid.bandwidth());
  h = hash_double(h, spec.hbar);
  for (std::size_t m = 0; m < grid.size(); ++m) h = splitmix64(h ^ grid.full_index(m));
  return h;
}

void save_dictionary(const std::filesystem::path& path, const PolarDictionary& dict) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open cache file " + path.string());
  os.write(kCacheMagic, sizeof kCacheMagic);
  write_pod(os, dictionary_key(dict.array(), dict.grid(), dict.spec()));
  const std::uint64_t rows = dict.rows();
  const std::uint64_t cols = dict.base_size();
  const std::uint64_t slots = dict.frequency_selective() ? dict.subcarriers() : 1;
  const std::uint8_t fs = dict.frequency_selective() ? 1 : 0;
  write_pod(os, rows);
  write_pod(os, cols);
  write_pod(os, slots);
  write_pod(os, fs);
  write_pod(os, dict.spec().ring_scale);
  for (std::size_t k = 0; k < dict.base_size(); ++k) {
    const AtomParams& p = dict.params(k);
    write_pod(os, p.theta);
    write_pod(os, p.range.value_or(-1.0));
  }
  for (std::size_t s = 0; s < slots; ++s) {
    const CMatrix a = dict.atoms(s).leftCols(static_cast<Eigen::Index>(cols));
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
      for (Eigen::Index c = 0; c < a.cols(); ++c) {
        write_pod(os, a(r, c).real());
        write_pod(os, a(r, c).imag());
      }
    }
  }
  if (!os) throw Error("failed writing cache file " + path.string());
}

std::optional<PolarDictionary> load_dictionary(const std::filesystem::path& path,
                                               const ArrayGeometry& array,
                                               const SubcarrierGrid& grid,
                                               const DictionarySpec& spec) {
  std::ifstream is(path, std::ios::binary);
  if (!is) return std::nullopt;
  char magic[sizeof kCacheMagic];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kCacheMagic, sizeof magic) != 0) {
    return std::nullopt;
  }
  std::uint64_t key = 0, rows = 0, cols = 0, slots = 0;
  std::uint8_t fs = 0;
  double scale = 0.0;
  if (!read_pod(is, key) || key != dictionary_key(array, grid, spec)) return std::nullopt;
  if (!read_pod(is, rows) || !read_pod(is, cols) || !read_pod(is, slots) || !read_pod(is, fs) ||
      !read_pod(is, scale)) {
    return std::nullopt;
  }
  if (rows != array.size()) return std::nullopt;
  std::vector<AtomParams> params(cols);
  for (auto& p : params) {
    double range = 0.0;
    if (!read_pod(is, p.theta) || !read_pod(is, range)) return std::nullopt;
    if (range > 0.0) p.range = range;
  }
  std::vector<CMatrix> stored;
  for (std::uint64_t s = 0; s < slots; ++s) {
    CMatrix a(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
      for (Eigen::Index c = 0; c < a.cols(); ++c) {
        double re = 0.0, im = 0.0;
        if (!read_pod(is, re) || !read_pod(is, im)) return std::nullopt;
        a(r, c) = Complex(re, im);
      }
    }
    stored.push_back(std::move(a));
  }
  DictionarySpec loaded = spec;
  loaded.ring_scale = scale;
  return PolarDictionary::from_stored(array, grid, loaded, std::move(params), fs != 0,
                                      std::move(stored));
}

PolarDictionary build_fsprd_cached(const std::filesystem::path& cache_dir,
                                   const ArrayGeometry& array, const SubcarrierGrid& grid,
                                   std::size_t rings, std::size_t redundancy, double hbar) {
  DictionarySpec spec{DictionaryKind::kFsprd, rings, redundancy, hbar, 0.0};
  std::ostringstream name;
  name << "fsprd_" << std::hex << dictionary_key(array, grid, spec) << ".bin";
  const std::filesystem::path path = cache_dir / name.str();
  if (auto hit = load_dictionary(path, array, grid, spec)) return *hit;
  PolarDictionary dict = build_fsprd(array, grid, rings, redundancy, hbar);
  std::filesystem::create_directories(cache_dir);
  save_dictionary(path, dict);
  return dict;
}

}  // namespace thzloc
