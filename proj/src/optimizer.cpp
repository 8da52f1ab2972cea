#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "tagbench/slam.hpp"

namespace tagbench {

namespace {

// Huber cost of a factor with residual norm s and threshold d.
double huber_cost(double s, double d) {
  if (s <= d) return 0.5 * s * s;
  return d * (s - 0.5 * d);
}

// Square root of the IRLS weight for the same.
double huber_sqrt_weight(double s, double d) {
  if (s <= d) return 1.0;
  return std::sqrt(d / s);
}

struct StateIndex {
  std::map<int, int> body;     // frame -> column offset
  std::map<int, int> marker;   // id -> column offset
  std::map<int, int> feature;  // id -> column offset
  int dim = 0;
};

StateIndex build_index(const FactorGraph& g) {
  StateIndex idx;
  int col = 0;
  for (const auto& [f, p] : g.body_states) {
    (void)p;
    idx.body[f] = col;
    col += 6;
  }
  for (const auto& [m, p] : g.marker_states) {
    (void)p;
    idx.marker[m] = col;
    col += 6;
  }
  for (const auto& [f, p] : g.feature_states) {
    (void)p;
    idx.feature[f] = col;
    col += 3;
  }
  idx.dim = col;
  return idx;
}

double evaluate_cost(const FactorGraph& g, double huber_delta) {
  double cost = 0;
  for (const auto& f : g.marker_factors) {
    bool valid = false;
    const auto r = marker_reprojection_residual(
        g.rig.cameras[f.camera], g.body_states.at(f.frame),
        g.marker_states.at(f.marker_id), g.marker_sides.at(f.marker_id),
        f.observed, &valid);
    if (valid) cost += huber_cost(r.norm(), huber_delta);
  }
  for (const auto& f : g.feature_factors) {
    bool valid = false;
    const Vec2 r = feature_reprojection_residual(
        g.rig.cameras[f.camera], g.body_states.at(f.frame),
        g.feature_states.at(f.feature_id), f.observed, &valid);
    if (valid) cost += huber_cost(r.norm(), huber_delta);
  }
  for (const auto& p : g.priors) {
    cost += 0.5 * pose_prior_residual(p, g.body_states.at(p.frame)).squaredNorm();
  }
  return cost;
}

void apply_step(FactorGraph& g, const StateIndex& idx,
                const Eigen::VectorXd& dx) {
  for (auto& [frame, pose] : g.body_states) {
    const int c = idx.body.at(frame);
    pose = pose * se3_exp(Twist(dx.segment<3>(c), dx.segment<3>(c + 3)));
  }
  for (auto& [id, pose] : g.marker_states) {
    const int c = idx.marker.at(id);
    pose = pose * se3_exp(Twist(dx.segment<3>(c), dx.segment<3>(c + 3)));
  }
  for (auto& [id, point] : g.feature_states) {
    point += dx.segment<3>(idx.feature.at(id));
  }
}

}  // namespace

OptimizeResult optimize(FactorGraph& graph, const OptimizeOptions& opts) {
  graph.validate();
  if (opts.max_iterations <= 0 || opts.lambda0 <= 0 || opts.tol <= 0 ||
      opts.huber_delta <= 0) {
    throw Error("optimize: options must be positive");
  }

  const StateIndex idx = build_index(graph);
  const double delta_h = opts.huber_delta;

  OptimizeResult out;
  double cost = evaluate_cost(graph, delta_h);
  out.cost_history.push_back(cost);
  double lambda = opts.lambda0;
  int consecutive_rejects = 0;

  // Once the cost is at numerical zero (exact data) there is nothing to do.
  const double kAbsoluteFloor = 1e-24;

  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    if (cost <= kAbsoluteFloor) {
      out.converged = true;
      break;
    }

    // Assemble the damped normal equations with triplets.
    std::vector<Eigen::Triplet<double>> trips;
    Eigen::VectorXd g = Eigen::VectorXd::Zero(idx.dim);
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(idx.dim);

    auto add_block = [&](const Eigen::Ref<const Eigen::MatrixXd>& Ji, int ci,
                         const Eigen::Ref<const Eigen::MatrixXd>& Jj, int cj) {
      const Eigen::MatrixXd Hij = Ji.transpose() * Jj;
      for (int a = 0; a < Hij.rows(); ++a) {
        for (int b = 0; b < Hij.cols(); ++b) {
          trips.emplace_back(ci + a, cj + b, Hij(a, b));
        }
      }
    };

    for (const auto& f : graph.marker_factors) {
      Eigen::Matrix<double, 8, 1> r;
      Eigen::Matrix<double, 8, 6> Jb, Jm;
      if (!marker_reprojection_jacobians(
              graph.rig.cameras[f.camera], graph.body_states.at(f.frame),
              graph.marker_states.at(f.marker_id),
              graph.marker_sides.at(f.marker_id), f.observed, r, Jb, Jm)) {
        continue;  // behind the camera at this state: skip this iteration
      }
      const double w = huber_sqrt_weight(r.norm(), delta_h);
      r *= w;
      Jb *= w;
      Jm *= w;
      const int cb = idx.body.at(f.frame);
      const int cm = idx.marker.at(f.marker_id);
      add_block(Jb, cb, Jb, cb);
      add_block(Jm, cm, Jm, cm);
      add_block(Jb, cb, Jm, cm);
      add_block(Jm, cm, Jb, cb);
      g.segment<6>(cb) += Jb.transpose() * r;
      g.segment<6>(cm) += Jm.transpose() * r;
    }
    for (const auto& f : graph.feature_factors) {
      Vec2 r;
      Eigen::Matrix<double, 2, 6> Jb;
      Eigen::Matrix<double, 2, 3> Jf;
      if (!feature_reprojection_jacobians(
              graph.rig.cameras[f.camera], graph.body_states.at(f.frame),
              graph.feature_states.at(f.feature_id), f.observed, r, Jb, Jf)) {
        continue;
      }
      const double w = huber_sqrt_weight(r.norm(), delta_h);
      r *= w;
      Jb *= w;
      Jf *= w;
      const int cb = idx.body.at(f.frame);
      const int cf = idx.feature.at(f.feature_id);
      add_block(Jb, cb, Jb, cb);
      add_block(Jf, cf, Jf, cf);
      add_block(Jb, cb, Jf, cf);
      add_block(Jf, cf, Jb, cb);
      g.segment<6>(cb) += Jb.transpose() * r;
      g.segment<3>(cf) += Jf.transpose() * r;
    }
    for (const auto& p : graph.priors) {
      Eigen::Matrix<double, 6, 1> r;
      Eigen::Matrix<double, 6, 6> J;
      pose_prior_jacobian(p, graph.body_states.at(p.frame), r, J);
      const int cb = idx.body.at(p.frame);
      add_block(J, cb, J, cb);
      g.segment<6>(cb) += J.transpose() * r;
    }

    Eigen::SparseMatrix<double> H(idx.dim, idx.dim);
    H.setFromTriplets(trips.begin(), trips.end());
    for (int i = 0; i < idx.dim; ++i) diag(i) = H.coeff(i, i);

    // Inner damping loop: retry with a larger lambda on rejection.
    bool stop = false;
    while (true) {
      Eigen::SparseMatrix<double> A = H;
      for (int i = 0; i < idx.dim; ++i) {
        A.coeffRef(i, i) += lambda * std::max(diag(i), 1e-12);
      }
      Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(A);
      Eigen::VectorXd dx;
      bool ok = solver.info() == Eigen::Success;
      if (ok) {
        dx = solver.solve(-g);
        ok = dx.allFinite();
      }

      // A vanishing step means the gradient is numerically zero: done.
      if (ok && dx.norm() < 1e-12) {
        out.converged = true;
        stop = true;
        break;
      }

      double trial_cost = std::numeric_limits<double>::infinity();
      FactorGraph trial;
      if (ok) {
        trial = graph;
        apply_step(trial, idx, dx);
        trial_cost = evaluate_cost(trial, delta_h);
      }

      if (ok && trial_cost < cost) {
        const double drop = cost - trial_cost;
        graph = std::move(trial);
        cost = trial_cost;
        out.cost_history.push_back(cost);
        ++out.iterations;
        lambda = std::max(lambda * 0.1, 1e-12);
        consecutive_rejects = 0;
        if (drop < opts.tol * std::max(cost, 1e-30) ||
            cost <= kAbsoluteFloor) {
          out.converged = true;
          stop = true;
        }
        break;
      }

      // A finite trial that cannot beat the current cost within tolerance
      // is a plateau, not a divergence: persistent rejection with a finite
      // step only happens once the gradient has flattened out. One raised
      // lambda retry is allowed first so plain overshoots get damped.
      if (ok && consecutive_rejects >= 1 && std::isfinite(trial_cost) &&
          trial_cost - cost <= opts.tol * std::max(cost, 1e-30)) {
        out.converged = true;
        stop = true;
        break;
      }

      lambda *= 10.0;
      if (++consecutive_rejects >= 10) {
        throw OptimizeDivergenceError(
            "optimize: ten consecutive rejected steps", graph);
      }
    }
    if (stop) break;
  }

  out.final_cost = cost;
  if (!out.converged && cost <= kAbsoluteFloor) out.converged = true;
  return out;
}

}  // namespace tagbench
