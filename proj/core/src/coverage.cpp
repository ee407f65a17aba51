#include "cmlo/coverage.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cmlo/error.hpp"

namespace cmlo::shift {

namespace {

double cross(const Point2& o, const Point2& a, const Point2& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

}  // namespace

PcaProjection pca_project(std::span<const Eigen::VectorXd> states, int dims) {
  if (states.size() < 2) throw Error(ErrorKind::InvalidArgument, "PCA needs at least two points");
  const auto d = states.front().size();
  if (d < dims) throw Error(ErrorKind::InvalidArgument, "state dimension below projection dimension");
  const auto n = static_cast<Eigen::Index>(states.size());

  Eigen::MatrixXd x(d, n);
  for (Eigen::Index i = 0; i < n; ++i) x.col(i) = states[static_cast<std::size_t>(i)];
  Eigen::VectorXd center = x.rowwise().mean();
  x.colwise() -= center;
  if (x.cwiseAbs().maxCoeff() == 0.0) {
    throw Error(ErrorKind::DegenerateCloud, "all points coincide");
  }

  const Eigen::MatrixXd cov = x * x.transpose() / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  // Eigen returns ascending eigenvalues.
  PcaProjection out;
  out.center = center;
  out.basis.resize(d, dims);
  out.explained_variance.resize(dims);
  for (int k = 0; k < dims; ++k) {
    Eigen::VectorXd v = eig.eigenvectors().col(d - 1 - k);
    for (Eigen::Index i = 0; i < d; ++i) {
      if (std::abs(v(i)) > 1e-12) {
        if (v(i) < 0.0) v = -v;
        break;
      }
    }
    out.basis.col(k) = v;
    out.explained_variance(k) = std::max(0.0, eig.eigenvalues()(d - 1 - k));
  }
  const Eigen::MatrixXd proj = out.basis.transpose() * x;
  out.points.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    out.points[static_cast<std::size_t>(i)] = {proj(0, i), dims > 1 ? proj(1, i) : 0.0};
  }
  return out;
}

// Monotone-chain form of the scan: a lexicographic sort stays a strict weak
// order even when nearly collinear points make angular comparisons intransitive.
std::vector<Point2> graham_scan(std::vector<Point2> pts) {
  if (pts.size() < 3) return pts;
  std::sort(pts.begin(), pts.end(),
            [](const Point2& a, const Point2& b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  pts.erase(std::unique(pts.begin(), pts.end(),
                        [](const Point2& a, const Point2& b) { return a.x == b.x && a.y == b.y; }),
            pts.end());
  if (pts.size() < 3) return pts;

  std::vector<Point2> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0.0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0.0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);

  auto lowest = std::min_element(hull.begin(), hull.end(), [](const Point2& a, const Point2& b) {
    return a.y < b.y || (a.y == b.y && a.x < b.x);
  });
  std::rotate(hull.begin(), lowest, hull.end());
  return hull;
}

double convex_hull_area(std::vector<Point2> points) {
  for (const auto& p : points) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      throw Error(ErrorKind::InvalidArgument, "non-finite hull coordinate");
    }
  }
  const auto hull = graham_scan(std::move(points));
  if (hull.size() < 3) return 0.0;
  double twice = 0.0;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const auto& a = hull[i];
    const auto& b = hull[(i + 1) % hull.size()];
    twice += a.x * b.y - b.x * a.y;
  }
  return std::abs(twice) / 2.0;
}

HullEstimate coverage_volume(std::span<const Eigen::VectorXd> states, int sample_size, Rng& rng) {
  if (states.empty()) throw Error(ErrorKind::EmptyBuffer, "no states to cover");
  if (sample_size < 1) throw Error(ErrorKind::InvalidArgument, "hull sample size must be >= 1");

  std::vector<Eigen::VectorXd> sample;
  const auto n = states.size();
  const auto m = static_cast<std::size_t>(sample_size);
  if (n <= m) {
    sample.assign(states.begin(), states.end());
  } else {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n - i));
      std::swap(idx[i], idx[std::min(j, n - 1)]);
      sample.push_back(states[idx[i]]);
    }
  }

  HullEstimate out;
  out.n_points = static_cast<int>(sample.size());
  if (sample.size() < 3) {
    out.degenerate = true;
    return out;
  }
  try {
    auto proj = pca_project(sample, 2);
    out.pca_basis = proj.basis;
    out.volume = convex_hull_area(std::move(proj.points));
    out.degenerate = out.volume == 0.0;
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::DegenerateCloud) throw;
    out.degenerate = true;
  }
  return out;
}

}  // namespace cmlo::shift
