#pragma once

// State-coverage estimation: PCA to two dimensions, Graham-scan convex
// hull, shoelace area.

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "cmlo/random.hpp"

namespace cmlo::shift {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

struct PcaProjection {
  std::vector<Point2> points;
  Eigen::MatrixXd basis;               // state_dim x dims, orthonormal columns
  Eigen::VectorXd explained_variance;  // descending
  Eigen::VectorXd center;
};

// Mean-centred projection onto the leading principal directions. Each basis
// vector's first non-negligible coordinate is made positive.
// Throws DegenerateCloud when every point coincides.
PcaProjection pca_project(std::span<const Eigen::VectorXd> states, int dims = 2);

// Area of the convex hull (Graham scan + shoelace). Degenerate sets give 0.
double convex_hull_area(std::vector<Point2> points);

// Hull vertices in counter-clockwise order, starting at the lowest point.
std::vector<Point2> graham_scan(std::vector<Point2> points);

struct HullEstimate {
  double volume = 0.0;
  int n_points = 0;
  Eigen::MatrixXd pca_basis;
  bool degenerate = false;
};

// Samples up to sample_size states without replacement (all of them when the
// buffer is no larger), projects and measures the hull.
HullEstimate coverage_volume(std::span<const Eigen::VectorXd> states, int sample_size, Rng& rng);

}  // namespace cmlo::shift
