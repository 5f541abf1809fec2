#include "lingrow/energy.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

namespace lingrow {

DirichletProblem::DirichletProblem(Grid2 grid_, Field u0_, RadialProfile density_)
    : grid(std::move(grid_)), u0(std::move(u0_)), density(std::move(density_)) {
  const Grid2 ext = grid.with_ghost_layer();
  if (!(u0.grid() == ext)) {
    throw std::invalid_argument("boundary datum must be sampled on the grid plus ghost layer");
  }
  if (density.kind() == ProfileKind::Combined) {
    throw std::invalid_argument("base density must be phi_mu or minimal_surface");
  }
}

FidelityProblem::FidelityProblem(Grid2 grid_, Field f_, Mask region_, double lambda_,
                                 RadialProfile density_)
    : grid(std::move(grid_)),
      f(std::move(f_)),
      region(std::move(region_)),
      lambda(lambda_),
      density(std::move(density_)) {
  if (!(f.grid() == grid) || !(region.grid() == grid)) {
    throw std::invalid_argument("data and mask must live on the problem grid");
  }
  if (f.channels() != 1) throw std::invalid_argument("fidelity problems are scalar");
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("lambda must be > 0");
  if (density.kind() == ProfileKind::Combined) {
    throw std::invalid_argument("base density must be phi_mu or minimal_surface");
  }
  region.validate();
}

const Grid2& problem_grid(const Problem& p) {
  return std::visit([](const auto& q) -> const Grid2& { return q.grid; }, p);
}

int problem_channels(const Problem& p) {
  return std::visit([](const auto& q) { return q.channels(); }, p);
}

const RadialProfile& problem_density(const Problem& p) {
  return std::visit([](const auto& q) -> const RadialProfile& { return q.density; }, p);
}

// ---------------------------------------------------------------------------

RegularizationState::RegularizationState(double delta, double mu) : delta_(delta), mu_(mu) {
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must lie in (0, 1)");
}

RegularizationState RegularizationState::dirichlet(double delta, double mu, int n) {
  if (n < 2) throw std::invalid_argument("dimension must be >= 2");
  if (!(mu > 1.0 && mu < 1.0 + 2.0 / n)) {
    throw std::invalid_argument("Dirichlet regularisation needs 1 < mu < 1 + 2/n");
  }
  return RegularizationState(delta, mu);
}

RegularizationState RegularizationState::fidelity(double delta, double mu) {
  if (!(mu > 1.0 && mu < 2.0)) throw std::invalid_argument("fidelity regularisation needs 1 < mu < 2");
  return RegularizationState(delta, mu);
}

RegularizationState RegularizationState::for_problem(const Problem& p, double delta, double mu) {
  return std::holds_alternative<DirichletProblem>(p) ? dirichlet(delta, mu) : fidelity(delta, mu);
}

RadialProfile regularized_density(const RadialProfile& base, const RegularizationState& r) {
  return RadialProfile::combined(r.delta(), r.mu(), base);
}

Field clip_data(const Field& f, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must lie in (0, 1)");
  const double cap = 1.0 / delta;
  Field out = f;
  out.values() = f.values().cwiseMax(-cap).cwiseMin(cap);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

void check_field(const Grid2& grid, int channels, const Field& w) {
  if (!(w.grid() == grid)) throw std::invalid_argument("field does not live on the problem grid");
  if (w.channels() != channels) throw std::invalid_argument("field has the wrong channel count");
}

double regularizer_sum(const RadialProfile& density, const GradientField& g) {
  const Eigen::VectorXd m = g.magnitude();
  double sum = 0.0;
  for (Eigen::Index c = 0; c < m.size(); ++c) sum += profile_eval(density, m(c));
  return sum * g.grid.cell_area();
}

double data_sum(const FidelityProblem& p, const Field& data, const Field& w) {
  double sum = 0.0;
  const auto& wv = w.values();
  const auto& fv = data.values();
  for (Eigen::Index c = 0; c < p.grid.cells(); ++c) {
    if (p.region.member(c)) continue;
    const double d = wv(c, 0) - fv(c, 0);
    sum += d * d;
  }
  return p.lambda * sum * p.grid.cell_area();
}

// DF(P) per stencil cell, stored like a gradient field.
GradientField flux(const RadialProfile& density, const GradientField& g) {
  GradientField out = g;
  const Eigen::VectorXd m = g.magnitude();
  for (Eigen::Index c = 0; c < m.size(); ++c) {
    const double scale = m(c) == 0.0 ? 0.0 : profile_d1_over_t(density, m(c));
    out.dx.row(c) *= scale;
    out.dy.row(c) *= scale;
  }
  return out;
}

// One forward-difference stencil: the cell itself, its +x and +y
// neighbours. `node` holds the free cell index or -1 for frozen values;
// `active` says whether the difference in that direction is present.
struct Stencil {
  std::array<Eigen::Index, 3> node;
  std::array<bool, 2> active;
};

template <typename Visit>
void for_each_stencil(const Problem& p, Visit&& visit) {
  const Grid2& g = problem_grid(p);
  const bool dirichlet = std::holds_alternative<DirichletProblem>(p);
  auto free_index = [&](int i, int j) -> Eigen::Index {
    return (i >= 0 && i < g.nx && j >= 0 && j < g.ny) ? g.index(i, j) : -1;
  };
  if (dirichlet) {
    Eigen::Index row = 0;
    for (int j = -1; j < g.ny; ++j) {
      for (int i = -1; i < g.nx; ++i, ++row) {
        visit(row, Stencil{{free_index(i, j), free_index(i + 1, j), free_index(i, j + 1)}, {true, true}});
      }
    }
    return;
  }
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      const bool ax = i + 1 < g.nx;
      const bool ay = j + 1 < g.ny;
      visit(g.index(i, j), Stencil{{g.index(i, j), ax ? g.index(i + 1, j) : -1, ay ? g.index(i, j + 1) : -1},
                                   {ax, ay}});
    }
  }
}

}  // namespace

GradientField problem_gradient(const Problem& p, const Field& w) {
  if (const auto* d = std::get_if<DirichletProblem>(&p)) return gradient_forward(w, d->u0);
  return gradient_forward(w);
}

double energy_dirichlet(const DirichletProblem& p, const std::optional<RegularizationState>& r,
                        const Field& w) {
  check_field(p.grid, p.channels(), w);
  const GradientField g = gradient_forward(w, p.u0);
  return r ? regularizer_sum(regularized_density(p.density, *r), g) : regularizer_sum(p.density, g);
}

double energy_fidelity(const FidelityProblem& p, const std::optional<RegularizationState>& r,
                       const Field& w) {
  check_field(p.grid, 1, w);
  const GradientField g = gradient_forward(w);
  if (!r) return regularizer_sum(p.density, g) + data_sum(p, p.f, w);
  return regularizer_sum(regularized_density(p.density, *r), g) +
         data_sum(p, clip_data(p.f, r->delta()), w);
}

double energy(const Problem& p, const std::optional<RegularizationState>& r, const Field& w) {
  if (const auto* d = std::get_if<DirichletProblem>(&p)) return energy_dirichlet(*d, r, w);
  return energy_fidelity(std::get<FidelityProblem>(p), r, w);
}

double relaxed_boundary_penalty(const DirichletProblem& p, const Field& w) {
  check_field(p.grid, p.channels(), w);
  const Grid2& g = p.grid;
  const Grid2& ge = p.u0.grid();
  const double k = recession_slope(p.density);
  double sum = 0.0;
  auto face = [&](int i, int j, int gi, int gj) {
    sum += (p.u0.values().row(ge.index(gi, gj)) - w.values().row(g.index(i, j))).norm();
  };
  for (int i = 0; i < g.nx; ++i) {
    face(i, 0, i + 1, 0);
    face(i, g.ny - 1, i + 1, g.ny + 1);
  }
  for (int j = 0; j < g.ny; ++j) {
    face(0, j, 0, j + 1);
    face(g.nx - 1, j, g.nx + 1, j + 1);
  }
  return g.h * k * sum;
}

double relaxed_energy(const DirichletProblem& p, const Field& w) {
  check_field(p.grid, p.channels(), w);
  return regularizer_sum(p.density, gradient_forward(w)) + relaxed_boundary_penalty(p, w);
}

Field euler_residual(const Problem& p, const RegularizationState& r, const Field& w) {
  const Grid2& grid = problem_grid(p);
  check_field(grid, problem_channels(p), w);
  const RadialProfile density = regularized_density(problem_density(p), r);
  Field res = divergence_adjoint(flux(density, problem_gradient(p, w)));
  res.values() *= -grid.cell_area();
  if (const auto* fp = std::get_if<FidelityProblem>(&p)) {
    const Field fd = clip_data(fp->f, r.delta());
    const double weight = 2.0 * fp->lambda * grid.cell_area();
    for (Eigen::Index c = 0; c < grid.cells(); ++c) {
      if (!fp->region.member(c)) res.values()(c, 0) += weight * (w.values()(c, 0) - fd.values()(c, 0));
    }
  }
  return res;
}

Eigen::SparseMatrix<double> energy_hessian(const Problem& p, const RegularizationState& r,
                                           const Field& w) {
  const Grid2& grid = problem_grid(p);
  const int n = problem_channels(p);
  check_field(grid, n, w);
  const RadialProfile density = regularized_density(problem_density(p), r);
  const GradientField g = problem_gradient(p, w);
  const Eigen::Index cells = grid.cells();
  const double inv_h = 1.0 / grid.h;
  const double area = grid.cell_area();

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(g.stencil_cells()) * 9 * n * n);

  // coef[d][node]: derivative of the d-th difference w.r.t. the node value.
  constexpr std::array<std::array<double, 3>, 2> kCoef = {{{-1.0, 1.0, 0.0}, {-1.0, 0.0, 1.0}}};
  Eigen::VectorXd pvec(2 * n);
  for_each_stencil(p, [&](Eigen::Index row, const Stencil& s) {
    for (int c = 0; c < n; ++c) {
      pvec(c) = g.dx(row, c);
      pvec(n + c) = g.dy(row, c);
    }
    const double norm = pvec.norm();
    double tangential, radial;
    if (norm < 1e-8) {
      tangential = radial = profile_d2(density, 0.0);
    } else {
      tangential = profile_d1_over_t(density, norm);
      radial = profile_d2(density, norm);
      pvec /= norm;
    }
    // H = tangential * I + (radial - tangential) * phat phat^T on vec(P).
    for (int a = 0; a < 3; ++a) {
      if (s.node[a] < 0) continue;
      for (int b = 0; b < 3; ++b) {
        if (s.node[b] < 0) continue;
        for (int ca = 0; ca < n; ++ca) {
          for (int cb = 0; cb < n; ++cb) {
            double value = 0.0;
            bool structural = false;
            for (int d = 0; d < 2; ++d) {
              if (!s.active[d] || kCoef[d][a] == 0.0) continue;
              for (int e = 0; e < 2; ++e) {
                if (!s.active[e] || kCoef[e][b] == 0.0) continue;
                double h_de = 0.0;
                if (norm >= 1e-8) h_de = (radial - tangential) * pvec(d * n + ca) * pvec(e * n + cb);
                if (d == e && ca == cb) h_de += tangential;
                value += kCoef[d][a] * kCoef[e][b] * h_de;
                structural = true;
              }
            }
            // Explicit zeros keep the sparsity pattern fixed across iterates.
            if (structural) {
              triplets.emplace_back(s.node[a] + cells * ca, s.node[b] + cells * cb,
                                    value * inv_h * inv_h * area);
            }
          }
        }
      }
    }
  });

  if (const auto* fp = std::get_if<FidelityProblem>(&p)) {
    const double weight = 2.0 * fp->lambda * area;
    for (Eigen::Index c = 0; c < cells; ++c) {
      if (!fp->region.member(c)) triplets.emplace_back(c, c, weight);
    }
  }

  Eigen::SparseMatrix<double> hessian(cells * n, cells * n);
  hessian.setFromTriplets(triplets.begin(), triplets.end());
  return hessian;
}

Eigen::VectorXd curvature_bound_diagonal(const Problem& p, const RegularizationState& r) {
  const Grid2& grid = problem_grid(p);
  const int n = problem_channels(p);
  const double bound = profile_d2(regularized_density(problem_density(p), r), 0.0);
  Eigen::VectorXd weight = Eigen::VectorXd::Zero(grid.cells());
  for_each_stencil(p, [&](Eigen::Index, const Stencil& s) {
    // Own node sits in both differences, neighbours in one each.
    if (s.node[0] >= 0) weight(s.node[0]) += s.active[0] + s.active[1];
    if (s.node[1] >= 0 && s.active[0]) weight(s.node[1]) += 1.0;
    if (s.node[2] >= 0 && s.active[1]) weight(s.node[2]) += 1.0;
  });
  Eigen::VectorXd diag = bound * weight;
  if (const auto* fp = std::get_if<FidelityProblem>(&p)) {
    for (Eigen::Index c = 0; c < grid.cells(); ++c) {
      if (!fp->region.member(c)) diag(c) += 2.0 * fp->lambda * grid.cell_area();
    }
  }
  Eigen::VectorXd out(grid.cells() * n);
  for (int c = 0; c < n; ++c) out.segment(c * grid.cells(), grid.cells()) = diag;
  return out;
}

}  // namespace lingrow
