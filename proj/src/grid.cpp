#include "lingrow/grid.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace lingrow {

Grid2::Grid2(int nx_, int ny_, double h_, Eigen::Vector2d origin_)
    : nx(nx_), ny(ny_), h(h_), origin(std::move(origin_)) {
  if (nx < 2 || ny < 2) throw std::invalid_argument("grid needs at least 2 cells per direction");
  if (!(h > 0.0) || !std::isfinite(h)) throw std::invalid_argument("grid spacing must be > 0");
  if (static_cast<long>(nx) * ny > kMaxGridCells) {
    throw std::invalid_argument("grid exceeds the cell cap of " + std::to_string(kMaxGridCells));
  }
}

Grid2 Grid2::with_ghost_layer() const {
  return Grid2(nx + 2, ny + 2, h, origin - Eigen::Vector2d(h, h));
}

bool Grid2::operator==(const Grid2& other) const {
  return nx == other.nx && ny == other.ny && h == other.h && origin == other.origin;
}

// ---------------------------------------------------------------------------

Field::Field(Grid2 grid, int channels)
    : grid_(std::move(grid)), values_(Eigen::MatrixXd::Zero(grid_.cells(), channels)) {
  if (channels < 1) throw std::invalid_argument("field needs at least one channel");
}

Field::Field(Grid2 grid, Eigen::MatrixXd values) : grid_(std::move(grid)), values_(std::move(values)) {
  if (values_.rows() != grid_.cells() || values_.cols() < 1) {
    throw std::invalid_argument("field values do not match the grid");
  }
  if (!values_.allFinite()) throw std::invalid_argument("field values must be finite");
}

Field Field::constant(const Grid2& grid, int channels, double value) {
  Field f(grid, channels);
  f.values_.setConstant(value);
  return f;
}

Field Field::sample(const Grid2& grid, int channels,
                    const std::function<Eigen::VectorXd(double, double)>& fn) {
  Field f(grid, channels);
  for (int j = 0; j < grid.ny; ++j) {
    for (int i = 0; i < grid.nx; ++i) {
      const Eigen::Vector2d x = grid.center(i, j);
      const Eigen::VectorXd v = fn(x.x(), x.y());
      if (v.size() != channels) throw std::invalid_argument("sampler returned wrong channel count");
      f.values_.row(grid.index(i, j)) = v.transpose();
    }
  }
  if (!f.values_.allFinite()) throw std::invalid_argument("sampled field is not finite");
  return f;
}

Field Field::sample_scalar(const Grid2& grid, const std::function<double(double, double)>& fn) {
  return sample(grid, 1, [&](double x, double y) { return Eigen::VectorXd::Constant(1, fn(x, y)); });
}

Field Field::without_ghost_layer() const {
  const Grid2 inner(grid_.nx - 2, grid_.ny - 2, grid_.h, grid_.origin + Eigen::Vector2d(grid_.h, grid_.h));
  Field out(inner, channels());
  for (int j = 0; j < inner.ny; ++j) {
    for (int i = 0; i < inner.nx; ++i) {
      out.values_.row(inner.index(i, j)) = values_.row(grid_.index(i + 1, j + 1));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

Mask::Mask(Grid2 grid) : grid_(std::move(grid)), member_(grid_.cells(), 0) {}

Mask::Mask(Grid2 grid, std::vector<std::uint8_t> member)
    : grid_(std::move(grid)), member_(std::move(member)) {
  if (static_cast<Eigen::Index>(member_.size()) != grid_.cells()) {
    throw std::invalid_argument("mask size does not match the grid");
  }
  validate();
}

void Mask::set(int i, int j, bool in_region) {
  member_[grid_.index(i, j)] = in_region ? 1 : 0;
}

Eigen::Index Mask::count() const {
  Eigen::Index n = 0;
  for (auto m : member_) n += (m != 0);
  return n;
}

void Mask::validate() const {
  if (count() >= grid_.cells()) {
    throw std::invalid_argument("inpainting region must leave at least one data cell");
  }
}

bool Ball::inside(const Grid2& grid) const {
  if (!(radius > 0.0)) return false;
  const Eigen::Vector2d lo = grid.origin;
  const Eigen::Vector2d hi = grid.origin + Eigen::Vector2d(grid.width(), grid.height());
  const double dist = std::min({center.x() - lo.x(), hi.x() - center.x(), center.y() - lo.y(),
                                hi.y() - center.y()});
  return dist > radius;
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd GradientField::at(Eigen::Index row) const {
  Eigen::MatrixXd m(dx.cols(), 2);
  m.col(0) = dx.row(row).transpose();
  m.col(1) = dy.row(row).transpose();
  return m;
}

Eigen::VectorXd GradientField::magnitude() const {
  return (dx.rowwise().squaredNorm() + dy.rowwise().squaredNorm()).cwiseSqrt();
}

GradientField gradient_forward(const Field& u) {
  const Grid2& g = u.grid();
  const int n = u.channels();
  GradientField out{BoundaryRule::Neumann, g, Eigen::MatrixXd::Zero(g.cells(), n),
                    Eigen::MatrixXd::Zero(g.cells(), n)};
  const double inv_h = 1.0 / g.h;
  const auto& v = u.values();
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      const Eigen::Index c = g.index(i, j);
      if (i + 1 < g.nx) out.dx.row(c) = (v.row(g.index(i + 1, j)) - v.row(c)) * inv_h;
      if (j + 1 < g.ny) out.dy.row(c) = (v.row(g.index(i, j + 1)) - v.row(c)) * inv_h;
    }
  }
  return out;
}

GradientField gradient_forward(const Field& u, const Field& ghost) {
  const Grid2& g = u.grid();
  const Grid2& ge = ghost.grid();
  if (ge.nx != g.nx + 2 || ge.ny != g.ny + 2 || ghost.channels() != u.channels()) {
    throw std::invalid_argument("ghost field must cover the grid plus one ghost layer");
  }
  const int n = u.channels();
  GradientField out{BoundaryRule::Dirichlet, g, Eigen::MatrixXd::Zero(0, n), Eigen::MatrixXd::Zero(0, n)};
  out.dx.setZero(out.stencil_cells(), n);
  out.dy.setZero(out.stencil_cells(), n);
  const double inv_h = 1.0 / g.h;
  // Value at extended index (i, j) in [-1, nx] x [-1, ny].
  auto value = [&](int i, int j) -> Eigen::RowVectorXd {
    if (i >= 0 && i < g.nx && j >= 0 && j < g.ny) return u.values().row(g.index(i, j));
    return ghost.values().row(ge.index(i + 1, j + 1));
  };
  for (int j = -1; j < g.ny; ++j) {
    for (int i = -1; i < g.nx; ++i) {
      const Eigen::Index row = out.stencil_index(i, j);
      const Eigen::RowVectorXd here = value(i, j);
      out.dx.row(row) = (value(i + 1, j) - here) * inv_h;
      out.dy.row(row) = (value(i, j + 1) - here) * inv_h;
    }
  }
  return out;
}

Field divergence_adjoint(const GradientField& gf) {
  const Grid2& g = gf.grid;
  const int n = static_cast<int>(gf.dx.cols());
  Field out(g, n);
  auto& v = out.values();
  const double inv_h = 1.0 / g.h;
  if (gf.rule == BoundaryRule::Dirichlet) {
    for (int j = 0; j < g.ny; ++j) {
      for (int i = 0; i < g.nx; ++i) {
        v.row(g.index(i, j)) = (gf.dx.row(gf.stencil_index(i - 1, j)) - gf.dx.row(gf.stencil_index(i, j)) +
                                gf.dy.row(gf.stencil_index(i, j - 1)) - gf.dy.row(gf.stencil_index(i, j))) *
                               -inv_h;
      }
    }
    return out;
  }
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      const Eigen::Index c = g.index(i, j);
      Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(n);
      if (i + 1 < g.nx) acc += gf.dx.row(c);
      if (i > 0) acc -= gf.dx.row(g.index(i - 1, j));
      if (j + 1 < g.ny) acc += gf.dy.row(c);
      if (j > 0) acc -= gf.dy.row(g.index(i, j - 1));
      v.row(c) = acc * inv_h;
    }
  }
  return out;
}

double total_variation(const GradientField& g) {
  return g.magnitude().sum() * g.grid.cell_area();
}

std::vector<Eigen::Index> ball_cells(const Grid2& grid, const Ball& b) {
  std::vector<Eigen::Index> cells;
  for (int j = 0; j < grid.ny; ++j) {
    for (int i = 0; i < grid.nx; ++i) {
      if (b.contains(grid.center(i, j))) cells.push_back(grid.index(i, j));
    }
  }
  return cells;
}

namespace {

std::vector<Eigen::Index> nonempty_ball(const Grid2& grid, const Ball& b) {
  auto cells = ball_cells(grid, b);
  if (cells.empty()) throw std::invalid_argument("ball contains no cell centre");
  return cells;
}

}  // namespace

double sup_on(const Field& u, const Ball& b) {
  const auto cells = nonempty_ball(u.grid(), b);
  double best = 0.0;
  for (auto c : cells) best = std::max(best, u.values().row(c).norm());
  return best;
}

double lp_on(const Field& u, const Ball& b, double p) {
  if (!(p > 0.0)) throw std::invalid_argument("lp_on needs p > 0");
  const auto cells = nonempty_ball(u.grid(), b);
  double sum = 0.0;
  for (auto c : cells) sum += std::pow(u.values().row(c).norm(), p);
  return sum * u.grid().cell_area();
}

double log_lp_on(const Field& u, const Ball& b, double p) {
  if (!(p > 0.0)) throw std::invalid_argument("log_lp_on needs p > 0");
  const auto cells = nonempty_ball(u.grid(), b);
  double peak = -std::numeric_limits<double>::infinity();
  std::vector<double> logs;
  logs.reserve(cells.size());
  for (auto c : cells) {
    const double m = u.values().row(c).norm();
    const double l = m > 0.0 ? p * std::log(m) : -std::numeric_limits<double>::infinity();
    logs.push_back(l);
    peak = std::max(peak, l);
  }
  if (!std::isfinite(peak)) return peak;
  double sum = 0.0;
  for (double l : logs) sum += std::exp(l - peak);
  return peak + std::log(sum) + std::log(u.grid().cell_area());
}

double lp_integral(const Field& u, double p) {
  double sum = 0.0;
  const Eigen::VectorXd m = u.magnitude();
  for (Eigen::Index c = 0; c < m.size(); ++c) sum += std::pow(m(c), p);
  return sum * u.grid().cell_area();
}

}  // namespace lingrow
