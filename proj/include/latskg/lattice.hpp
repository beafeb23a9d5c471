#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "error.hpp"
#include "integer_matrix.hpp"

namespace latskg {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using IntVec = std::vector<std::int64_t>;

inline constexpr double kMembershipTol = 1e-9;
inline constexpr int kCvpMaxDim = 12;
inline constexpr std::size_t kMaxCosetIndex = 1'000'000;
inline constexpr std::size_t kMaxEnumerated = 20'000'000;

struct IntVecHash {
  std::size_t operator()(const IntVec& v) const noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (auto x : v) {
      h ^= static_cast<std::uint64_t>(x);
      h *= 0x100000001b3ULL;
    }
    return static_cast<std::size_t>(h);
  }
};

class Lattice {
 public:
  Lattice() = default;

  explicit Lattice(const Mat& basis) {
    require(basis.rows() == basis.cols() && basis.rows() > 0, Errc::DimensionMismatch,
            "basis must be a nonempty square matrix");
    require(basis.allFinite(), Errc::InvalidArgument, "basis entries must be finite");
    auto d = std::make_shared<Data>();
    d->basis = basis;
    const double det = basis.partialPivLu().determinant();
    double scale = 1.0;
    for (int j = 0; j < basis.cols(); ++j) scale *= basis.col(j).norm();
    if (!(std::abs(det) > 1e-12 * scale)) fail(Errc::SingularBasis, "basis is rank deficient");
    d->volume = std::abs(det);
    d->inverse = basis.inverse();
    Eigen::HouseholderQR<Mat> qr(basis);
    d->r = qr.matrixQR().triangularView<Eigen::Upper>();
    d->qt = qr.householderQ().transpose();
    data_ = std::move(d);
  }

  static Lattice integer(int n, double scale = 1.0) {
    return Lattice(Mat::Identity(n, n) * scale);
  }

  int dim() const { return static_cast<int>(data_->basis.rows()); }
  const Mat& basis() const { return data_->basis; }
  const Mat& inverse_basis() const { return data_->inverse; }
  double volume() const { return data_->volume; }
  const Mat& r_factor() const { return data_->r; }
  const Mat& qt_factor() const { return data_->qt; }

  Vec point(const IntVec& z) const {
    Vec v = Vec::Zero(dim());
    for (int j = 0; j < dim(); ++j)
      if (z[j] != 0) v += static_cast<double>(z[j]) * data_->basis.col(j);
    return v;
  }

  Vec coords(const Vec& x) const { return data_->inverse * x; }

  std::optional<IntVec> integer_coords(const Vec& x, double tol = kMembershipTol) const {
    check_dim(x);
    const Vec t = coords(x);
    IntVec z(dim());
    for (int i = 0; i < dim(); ++i) {
      const double r = std::round(t[i]);
      if (std::abs(t[i] - r) > tol) return std::nullopt;
      z[i] = static_cast<std::int64_t>(r);
    }
    return z;
  }

  bool contains(const Vec& x, double tol = kMembershipTol) const {
    return integer_coords(x, tol).has_value();
  }

  Lattice scaled(double c) const { return Lattice(basis() * c); }

  void check_dim(const Vec& x) const {
    if (x.size() != dim()) fail(Errc::DimensionMismatch, "vector dimension does not match lattice");
  }

 private:
  struct Data {
    Mat basis, inverse, r, qt;
    double volume = 0.0;
  };
  std::shared_ptr<const Data> data_;
};

inline Lattice build_lattice(const Mat& basis) { return Lattice(basis); }

inline Lattice dual_lattice(const Lattice& L) { return Lattice(L.inverse_basis().transpose()); }

inline double vnr(const Lattice& L, double sigma) {
  require_sigma(sigma);
  return std::pow(L.volume(), 2.0 / L.dim()) / (sigma * sigma);
}

// LLL-reduced basis (delta = 0.99) of the same lattice.
inline Mat lll_basis(const Lattice& L, double delta = 0.99) {
  Mat b = L.basis();
  const int n = L.dim();
  Mat bs(n, n), mu = Mat::Zero(n, n);
  Vec nrm(n);
  auto gram_schmidt = [&] {
    for (int i = 0; i < n; ++i) {
      bs.col(i) = b.col(i);
      for (int j = 0; j < i; ++j) {
        mu(i, j) = b.col(i).dot(bs.col(j)) / nrm[j];
        bs.col(i) -= mu(i, j) * bs.col(j);
      }
      nrm[i] = bs.col(i).squaredNorm();
    }
  };
  gram_schmidt();
  int k = 1, guard = 0;
  while (k < n) {
    if (++guard > 100000) fail(Errc::InvalidArgument, "LLL did not converge");
    for (int j = k - 1; j >= 0; --j) {
      const double q = std::round(mu(k, j));
      if (q != 0.0) {
        b.col(k) -= q * b.col(j);
        gram_schmidt();
      }
    }
    if (nrm[k] >= (delta - mu(k, k - 1) * mu(k, k - 1)) * nrm[k - 1]) {
      ++k;
    } else {
      b.col(k).swap(b.col(k - 1));
      gram_schmidt();
      k = std::max(k - 1, 1);
    }
  }
  return b;
}

// Fincke-Pohst enumeration of all lattice points within `radius` of `center`.
// The visitor receives integer coordinates and the squared distance.
template <class Visit>
class BallEnumerator {
 public:
  BallEnumerator(const Lattice& L, const Vec& center, double radius, Visit& visit,
                 std::size_t max_points)
      : R_(L.r_factor()), y_(L.qt_factor() * center), n_(L.dim()),
        r2_(radius * radius * (1.0 + 1e-12)), visit_(visit), max_points_(max_points),
        z_(n_, 0), partial_(n_ + 1, 0.0) {}

  void run() {
    if (r2_ < 0.0) return;
    descend(n_ - 1);
  }

 private:
  void descend(int i) {
    double s = y_[i];
    for (int j = i + 1; j < n_; ++j) s -= R_(i, j) * static_cast<double>(z_[j]);
    const double rii = R_(i, i);
    const double c = s / rii;
    const double rem = r2_ - partial_[i + 1];
    if (rem < 0.0) return;
    const double w = std::sqrt(rem) / std::abs(rii);
    const auto lo = static_cast<std::int64_t>(std::ceil(c - w));
    const auto hi = static_cast<std::int64_t>(std::floor(c + w));
    for (std::int64_t zi = lo; zi <= hi; ++zi) {
      const double d = rii * (static_cast<double>(zi) - c);
      const double d2 = partial_[i + 1] + d * d;
      if (d2 > r2_) continue;
      z_[i] = zi;
      partial_[i] = d2;
      if (i == 0) {
        if (++count_ > max_points_)
          fail(Errc::EnumerationTooLarge, "lattice ball enumeration exceeded point budget");
        visit_(static_cast<const IntVec&>(z_), d2);
      } else {
        descend(i - 1);
      }
    }
    z_[i] = 0;
  }

  const Mat& R_;
  Vec y_;
  int n_;
  double r2_;
  Visit& visit_;
  std::size_t max_points_;
  std::size_t count_ = 0;
  IntVec z_;
  std::vector<double> partial_;
};

template <class Visit>
void for_each_point_in_ball(const Lattice& L, const Vec& center, double radius, Visit&& visit,
                            std::size_t max_points = kMaxEnumerated) {
  L.check_dim(center);
  if (L.dim() > kCvpMaxDim)
    fail(Errc::DimensionTooLarge, "enumeration limited to dimension " + std::to_string(kCvpMaxDim));
  BallEnumerator<std::remove_reference_t<Visit>> e(L, center, radius, visit, max_points);
  e.run();
}

namespace detail {

class ClosestSearch {
 public:
  ClosestSearch(const Lattice& L, const Vec& x)
      : R_(L.r_factor()), y_(L.qt_factor() * x), n_(L.dim()), z_(n_, 0), partial_(n_ + 1, 0.0) {}

  IntVec run() {
    // Babai nearest plane gives the initial radius.
    IntVec zb(n_);
    double d2 = 0.0;
    for (int i = n_ - 1; i >= 0; --i) {
      double s = y_[i];
      for (int j = i + 1; j < n_; ++j) s -= R_(i, j) * static_cast<double>(zb[j]);
      const double c = s / R_(i, i);
      zb[i] = static_cast<std::int64_t>(std::llround(c));
      const double d = R_(i, i) * (static_cast<double>(zb[i]) - c);
      d2 += d * d;
    }
    bound_ = d2 * (1.0 + 1e-9) + 1e-300;
    descend(n_ - 1);
    if (ties_.empty()) return zb;
    return *std::min_element(ties_.begin(), ties_.end());
  }

 private:
  static constexpr double kTieTol = 1e-11;

  void leaf(double d2) {
    if (d2 < best_ * (1.0 - kTieTol)) {
      best_ = d2;
      bound_ = d2 * (1.0 + kTieTol) + 1e-300;
      std::vector<IntVec> keep;
      keep.push_back(z_);
      ties_.swap(keep);
    } else if (d2 <= best_ * (1.0 + kTieTol) + 1e-300) {
      ties_.push_back(z_);
    }
  }

  void descend(int i) {
    double s = y_[i];
    for (int j = i + 1; j < n_; ++j) s -= R_(i, j) * static_cast<double>(z_[j]);
    const double rii = R_(i, i);
    const double c = s / rii;
    const double rem = bound_ - partial_[i + 1];
    if (rem < 0.0) return;
    const double w = std::sqrt(rem) / std::abs(rii);
    const auto lo = static_cast<std::int64_t>(std::ceil(c - w));
    const auto hi = static_cast<std::int64_t>(std::floor(c + w));
    for (std::int64_t zi = lo; zi <= hi; ++zi) {
      const double d = rii * (static_cast<double>(zi) - c);
      const double d2 = partial_[i + 1] + d * d;
      if (d2 > bound_) continue;
      z_[i] = zi;
      partial_[i] = d2;
      if (i == 0)
        leaf(d2);
      else
        descend(i - 1);
    }
    z_[i] = 0;
  }

  const Mat& R_;
  Vec y_;
  int n_;
  IntVec z_;
  std::vector<double> partial_;
  double bound_ = 0.0;
  double best_ = std::numeric_limits<double>::infinity();
  std::vector<IntVec> ties_;
};

}  // namespace detail

// Exact closest vector; ties go to the lexicographically smallest coordinates.
inline IntVec closest_coeffs(const Lattice& L, const Vec& x) {
  L.check_dim(x);
  if (L.dim() > kCvpMaxDim)
    fail(Errc::DimensionTooLarge, "CVP limited to dimension " + std::to_string(kCvpMaxDim));
  require(x.allFinite(), Errc::InvalidArgument, "non-finite input to CVP");
  return detail::ClosestSearch(L, x).run();
}

inline Vec nearest_lattice_point(const Lattice& L, const Vec& x) {
  return L.point(closest_coeffs(L, x));
}

inline double distance_to_lattice(const Lattice& L, const Vec& x) {
  return (x - nearest_lattice_point(L, x)).norm();
}

enum class RegionKind { Parallelepiped, Voronoi };

struct Reduction {
  Vec residue;
  Vec quantized;
  IntVec coeffs;
};

class FundamentalRegion {
 public:
  FundamentalRegion(Lattice L, RegionKind kind = RegionKind::Parallelepiped)
      : lattice_(std::move(L)), kind_(kind) {}

  const Lattice& lattice() const { return lattice_; }
  RegionKind kind() const { return kind_; }

  Reduction reduce(const Vec& x) const {
    lattice_.check_dim(x);
    Reduction r;
    if (kind_ == RegionKind::Parallelepiped) {
      const Vec t = lattice_.coords(x);
      r.coeffs.resize(t.size());
      // Snap coordinates that sit within 1e-9 below an integer onto it.
      for (int i = 0; i < t.size(); ++i)
        r.coeffs[i] = static_cast<std::int64_t>(std::floor(t[i] + kMembershipTol));
    } else {
      r.coeffs = closest_coeffs(lattice_, x);
    }
    r.quantized = lattice_.point(r.coeffs);
    r.residue = x - r.quantized;
    return r;
  }

  Vec residue(const Vec& x) const { return reduce(x).residue; }

  bool contains(const Vec& x, double tol = kMembershipTol) const {
    if (kind_ == RegionKind::Parallelepiped) {
      const Vec t = lattice_.coords(x);
      for (int i = 0; i < t.size(); ++i)
        if (t[i] < -tol || t[i] >= 1.0 - tol) return false;
      return true;
    }
    const IntVec z = closest_coeffs(lattice_, x);
    return std::all_of(z.begin(), z.end(), [](std::int64_t v) { return v == 0; });
  }

 private:
  Lattice lattice_;
  RegionKind kind_;
};

inline Reduction reduce_mod(const FundamentalRegion& region, const Vec& x) { return region.reduce(x); }

// Membership in the closed Voronoi cell tested against every relevant
// vector candidate, independently of the CVP routine.
inline bool in_voronoi_cell(const Lattice& L, const Vec& y, double tol = 1e-9) {
  const double ny = y.norm();
  if (ny == 0.0) return true;
  bool inside = true;
  for_each_point_in_ball(L, Vec::Zero(L.dim()), 2.0 * ny * (1.0 + 1e-9),
                         [&](const IntVec& z, double norm2) {
                           if (!inside || norm2 == 0.0) return;
                           const Vec v = L.point(z);
                           if (2.0 * y.dot(v) > norm2 + tol * std::max(1.0, norm2)) inside = false;
                         });
  return inside;
}

// Integer matrix M with coarse.basis() = fine.basis() * M.
inline IntMat relative_basis(const Lattice& fine, const Lattice& coarse) {
  require(fine.dim() == coarse.dim(), Errc::DimensionMismatch, "lattices differ in dimension");
  const Mat t = fine.inverse_basis() * coarse.basis();
  IntMat m(t.rows(), t.cols());
  for (int i = 0; i < t.rows(); ++i)
    for (int j = 0; j < t.cols(); ++j) {
      const double r = std::round(t(i, j));
      if (std::abs(t(i, j) - r) > kMembershipTol)
        fail(Errc::NotNested, "coarse generator is not a point of the fine lattice");
      m(i, j) = static_cast<std::int64_t>(r);
    }
  return m;
}

inline bool is_sublattice(const Lattice& fine, const Lattice& coarse) {
  try {
    relative_basis(fine, coarse);
    return true;
  } catch (const Error&) {
    return false;
  }
}

// Coset decomposition of fine/coarse. Representatives are fine-lattice points
// reduced into the coarse parallelepiped; index() maps any fine point to the
// number of its coset.
class CosetTable {
 public:
  CosetTable(Lattice fine, Lattice coarse, std::size_t max_index = kMaxCosetIndex)
      : fine_(std::move(fine)), coarse_(std::move(coarse)), region_(coarse_) {
    const IntMat m = relative_basis(fine_, coarse_);
    const IntMat h = hermite_lower(m);
    const int n = fine_.dim();
    long double idx = 1.0L;
    for (int i = 0; i < n; ++i) idx *= static_cast<long double>(h(i, i));
    if (idx > static_cast<long double>(max_index))
      fail(Errc::IndexTooLarge, "coset index exceeds configured limit");
    const auto count = static_cast<std::size_t>(idx);
    reps_.reserve(count);
    IntVec z(n, 0);
    for (std::size_t c = 0; c < count; ++c) {
      const Vec r = region_.residue(fine_.point(z));
      IntVec key = fine_key(r);
      lookup_.emplace(key, reps_.size());
      reps_.push_back(r);
      for (int i = n - 1; i >= 0; --i) {
        if (++z[i] < h(i, i)) break;
        z[i] = 0;
      }
    }
    require(lookup_.size() == reps_.size(), Errc::NotNested, "coset representatives collide");
  }

  std::size_t size() const { return reps_.size(); }
  const std::vector<Vec>& representatives() const { return reps_; }
  const Vec& representative(std::size_t i) const { return reps_[i]; }
  const Lattice& fine() const { return fine_; }
  const Lattice& coarse() const { return coarse_; }

  std::optional<std::size_t> find(const Vec& fine_point) const {
    if (!fine_.contains(fine_point)) return std::nullopt;
    const auto it = lookup_.find(fine_key(region_.residue(fine_point)));
    if (it == lookup_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t index(const Vec& fine_point) const {
    const auto i = find(fine_point);
    if (!i) fail(Errc::NotLatticePoint, "point is not in the fine lattice");
    return *i;
  }

 private:
  IntVec fine_key(const Vec& x) const {
    const Vec t = fine_.coords(x);
    IntVec k(t.size());
    for (int i = 0; i < t.size(); ++i) k[i] = static_cast<std::int64_t>(std::llround(t[i]));
    return k;
  }

  Lattice fine_, coarse_;
  FundamentalRegion region_;
  std::vector<Vec> reps_;
  std::unordered_map<IntVec, std::size_t, IntVecHash> lookup_;
};

inline std::vector<Vec> coset_representatives(const Lattice& fine, const Lattice& coarse,
                                              std::size_t max_index = kMaxCosetIndex) {
  return CosetTable(fine, coarse, max_index).representatives();
}

}  // namespace latskg
