#pragma once

// Cell-centred fields on a uniform rectangular grid and the forward
// difference gradient / divergence pair used by every energy.

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace lingrow {

inline constexpr long kMaxGridCells = 1L << 24;

/// nx * ny cells of side h; cell (i, j) has centre
/// origin + ((i + 1/2) h, (j + 1/2) h).
struct Grid2 {
  Grid2(int nx, int ny, double h, Eigen::Vector2d origin = Eigen::Vector2d::Zero());

  int nx;
  int ny;
  double h;
  Eigen::Vector2d origin;

  Eigen::Index cells() const { return static_cast<Eigen::Index>(nx) * ny; }
  Eigen::Index index(int i, int j) const { return i + static_cast<Eigen::Index>(nx) * j; }
  Eigen::Vector2d center(int i, int j) const {
    return origin + h * Eigen::Vector2d(i + 0.5, j + 0.5);
  }
  double width() const { return nx * h; }
  double height() const { return ny * h; }
  double cell_area() const { return h * h; }

  /// The grid grown by one ghost cell on every side.
  Grid2 with_ghost_layer() const;

  bool operator==(const Grid2& other) const;
};

/// N-channel field, one row of `values` per cell (row = i + nx * j).
class Field {
 public:
  Field(Grid2 grid, int channels);
  Field(Grid2 grid, Eigen::MatrixXd values);

  static Field constant(const Grid2& grid, int channels, double value);
  /// Samples fn(x, y) at cell centres; fn returns one value per channel.
  static Field sample(const Grid2& grid, int channels,
                      const std::function<Eigen::VectorXd(double, double)>& fn);
  static Field sample_scalar(const Grid2& grid, const std::function<double(double, double)>& fn);

  const Grid2& grid() const { return grid_; }
  int channels() const { return static_cast<int>(values_.cols()); }
  const Eigen::MatrixXd& values() const { return values_; }
  Eigen::MatrixXd& values() { return values_; }

  double operator()(int i, int j, int c = 0) const { return values_(grid_.index(i, j), c); }
  double& operator()(int i, int j, int c = 0) { return values_(grid_.index(i, j), c); }

  /// Euclidean channel norm per cell.
  Eigen::VectorXd magnitude() const { return values_.rowwise().norm(); }
  bool all_finite() const { return values_.allFinite(); }

  /// Interior block of a field that carries a ghost layer.
  Field without_ghost_layer() const;

 private:
  Grid2 grid_;
  Eigen::MatrixXd values_;
};

/// Membership flags for the inpainting region D (true = cell in D).
class Mask {
 public:
  explicit Mask(Grid2 grid);
  Mask(Grid2 grid, std::vector<std::uint8_t> member);

  const Grid2& grid() const { return grid_; }
  bool operator()(int i, int j) const { return member_[grid_.index(i, j)] != 0; }
  bool member(Eigen::Index cell) const { return member_[cell] != 0; }
  /// Unchecked; call validate() once the region is complete.
  void set(int i, int j, bool in_region);
  /// Throws when D covers every cell.
  void validate() const;
  Eigen::Index count() const;
  Eigen::Index complement_count() const { return grid_.cells() - count(); }

 private:
  Grid2 grid_;
  std::vector<std::uint8_t> member_;
};

struct Ball {
  Eigen::Vector2d center;
  double radius;

  bool contains(const Eigen::Vector2d& x) const { return (x - center).norm() < radius; }
  /// Strictly inside the rectangle spanned by the grid.
  bool inside(const Grid2& grid) const;
};

enum class BoundaryRule { Neumann, Dirichlet };

/// Forward differences per channel. For the Neumann rule the stencil cells
/// are the nx * ny grid cells and the difference across the far edges is
/// zero. For the Dirichlet rule the stencil cells are (i, j) in
/// [-1, nx-1] x [-1, ny-1] and out-of-grid neighbours are read from the
/// frozen ghost layer.
struct GradientField {
  BoundaryRule rule;
  Grid2 grid;  // grid of the free cells
  Eigen::MatrixXd dx;
  Eigen::MatrixXd dy;

  int stencil_nx() const { return rule == BoundaryRule::Dirichlet ? grid.nx + 1 : grid.nx; }
  int stencil_ny() const { return rule == BoundaryRule::Dirichlet ? grid.ny + 1 : grid.ny; }
  Eigen::Index stencil_cells() const {
    return static_cast<Eigen::Index>(stencil_nx()) * stencil_ny();
  }
  /// Row of stencil cell (i, j); for Dirichlet i and j start at -1.
  Eigen::Index stencil_index(int i, int j) const {
    return rule == BoundaryRule::Dirichlet ? (i + 1) + static_cast<Eigen::Index>(grid.nx + 1) * (j + 1)
                                           : i + static_cast<Eigen::Index>(grid.nx) * j;
  }
  /// The N x 2 matrix at one stencil cell.
  Eigen::MatrixXd at(Eigen::Index row) const;
  /// |grad| per stencil cell (Frobenius over channels and directions).
  Eigen::VectorXd magnitude() const;
};

GradientField gradient_forward(const Field& u);
/// `ghost` lives on grid.with_ghost_layer(); only its outer ring is read.
GradientField gradient_forward(const Field& u, const Field& ghost);

/// Negative adjoint of gradient_forward for the same boundary rule:
///   sum (grad u : g) = - sum u . div g   whenever the ghost ring is zero.
Field divergence_adjoint(const GradientField& g);

/// sum_cells h^2 |grad u|.
double total_variation(const GradientField& g);

/// Cells whose centres lie strictly inside the ball.
std::vector<Eigen::Index> ball_cells(const Grid2& grid, const Ball& b);

/// max |u| over the ball. Throws when no cell centre is inside.
double sup_on(const Field& u, const Ball& b);
/// sum_{cells in ball} |u|^p h^2 (the integral, not its p-th root).
double lp_on(const Field& u, const Ball& b, double p);
/// log of lp_on computed with log-sum-exp; -inf when u vanishes on the ball.
double log_lp_on(const Field& u, const Ball& b, double p);
/// sum over all cells of |u|^p h^2.
double lp_integral(const Field& u, double p);

}  // namespace lingrow
