#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <vector>

#include "thzloc/geometry.hpp"

namespace thzloc {

struct AtomParams {
  double theta = 0.0;
  std::optional<double> range;  // empty for a far-field atom

  bool far_field() const { return !range.has_value(); }
};

enum class DictionaryKind { kFsprd, kPtm, kFtm, kPartial };

struct DictionarySpec {
  DictionaryKind kind = DictionaryKind::kFsprd;
  std::size_t rings = 1;       // S
  std::size_t redundancy = 1;  // varsigma
  double hbar = 0.1;
  double ring_scale = 0.0;     // Z^eff_c(0) used for the ring radii
};

// Per-subcarrier atom matrices over a shared (theta, r) grid. Values are immutable: appending
// returns a new dictionary that shares the base storage.
class PolarDictionary {
 public:
  PolarDictionary(ArrayGeometry array, SubcarrierGrid grid, DictionarySpec spec,
                  std::vector<AtomParams> base_params, bool frequency_selective, bool lazy);

  // Wraps already materialized base matrices (one per subcarrier, or one when flat).
  static PolarDictionary from_stored(ArrayGeometry array, SubcarrierGrid grid, DictionarySpec spec,
                                     std::vector<AtomParams> base_params,
                                     bool frequency_selective, std::vector<CMatrix> stored);

  const ArrayGeometry& array() const { return base_->array; }
  const SubcarrierGrid& grid() const { return base_->grid; }
  const DictionarySpec& spec() const { return base_->spec; }
  bool frequency_selective() const { return base_->frequency_selective; }
  bool lazy() const { return base_->lazy; }

  std::size_t rows() const { return base_->array.size(); }
  std::size_t subcarriers() const { return base_->grid.size(); }
  std::size_t base_size() const { return base_->params.size(); }
  std::size_t size() const { return base_size() + extra_params_.size(); }

  // 0-based column metadata.
  const AtomParams& params(std::size_t k) const;

  // Column k at subcarrier m.
  CVector atom(std::size_t k, std::size_t m) const;
  // Full N x K matrix at subcarrier m (generated on demand when lazy).
  CMatrix atoms(std::size_t m) const;
  CMatrix columns(std::size_t m, const std::vector<std::size_t>& idx) const;
  // D[m]^H z without forming D[m] when stored.
  CVector correlate(std::size_t m, const CVector& z) const;

  PolarDictionary with_atom(double theta, double range) const;

  // Atom for params p at an arbitrary wavenumber (shared code path with the stored atoms).
  CVector atom_at(const AtomParams& p, double wavenumber) const;
  double atom_wavenumber(std::size_t m) const;

 private:
  struct Base {
    ArrayGeometry array;
    SubcarrierGrid grid;
    DictionarySpec spec;
    std::vector<AtomParams> params;
    bool frequency_selective = true;
    bool lazy = false;
    std::vector<CMatrix> stored;  // one per subcarrier, or a single matrix when flat
  };

  PolarDictionary() = default;
  const CMatrix& stored(std::size_t m) const;
  CMatrix generate_base(std::size_t m) const;

  std::shared_ptr<const Base> base_;
  std::vector<AtomParams> extra_params_;
  std::shared_ptr<const std::vector<CMatrix>> extra_atoms_;  // N x E per (distinct) subcarrier
};

// Z^eff_c(0) at the center frequency.
double ring_scale(const ArrayGeometry& array, const SubcarrierGrid& grid, double hbar);

// Base grid: angle-major, ring-minor, ring 0 far-field.
std::vector<AtomParams> polar_grid(std::size_t num_elements, std::size_t rings,
                                   std::size_t redundancy, double scale);

PolarDictionary build_fsprd(const ArrayGeometry& array, const SubcarrierGrid& grid,
                            std::size_t rings, std::size_t redundancy, double hbar = 0.1,
                            bool lazy = false);
PolarDictionary build_ptm(const ArrayGeometry& array, const SubcarrierGrid& grid,
                          std::size_t rings, std::size_t redundancy, double hbar = 0.1);
PolarDictionary build_ftm(const ArrayGeometry& array, const SubcarrierGrid& grid);
PolarDictionary build_partial(const ArrayGeometry& array, const SubcarrierGrid& grid,
                              std::vector<AtomParams> params);

// Returns the new column index (0-based) together with the extended dictionary.
std::pair<PolarDictionary, std::size_t> append_atom(const PolarDictionary& dict, double theta,
                                                    double range);

// Inverse of the base index map; the index is 1-based.
AtomParams grid_params(const PolarDictionary& dict, std::size_t one_based_index);

// Binary cache: header, grid metadata, then row-major complex float64 atoms per subcarrier.
std::uint64_t dictionary_key(const ArrayGeometry& array, const SubcarrierGrid& grid,
                             const DictionarySpec& spec);
void save_dictionary(const std::filesystem::path& path, const PolarDictionary& dict);
std::optional<PolarDictionary> load_dictionary(const std::filesystem::path& path,
                                               const ArrayGeometry& array,
                                               const SubcarrierGrid& grid,
                                               const DictionarySpec& spec);
PolarDictionary build_fsprd_cached(const std::filesystem::path& cache_dir,
                                   const ArrayGeometry& array, const SubcarrierGrid& grid,
                                   std::size_t rings, std::size_t redundancy, double hbar = 0.1);

}  // namespace thzloc
