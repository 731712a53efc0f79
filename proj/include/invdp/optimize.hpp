#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

namespace invdp {

struct OptimizerOptions {
    int max_iterations = 500;
    double gradient_tolerance = 1e-8;  ///< on max|g| relative to max(1, |f|)
};

struct OptimizerResult {
    Eigen::VectorXd x;
    Eigen::VectorXd gradient;
    double value = 0.0;
    int iterations = 0;
    bool converged = false;
    std::string message;
};

/// BFGS minimisation with Armijo backtracking. `fn(x, grad)` returns f(x) and
/// writes the gradient. A starting inverse-Hessian approximation may be given.
template <class Fn>
OptimizerResult bfgs_minimize(Fn&& fn, Eigen::VectorXd x, const OptimizerOptions& opt = {},
                              std::optional<Eigen::MatrixXd> inverse_hessian = std::nullopt) {
    const auto n = x.size();
    Eigen::VectorXd g(n);
    double f = fn(x, g);
    Eigen::MatrixXd H = inverse_hessian ? *inverse_hessian : Eigen::MatrixXd::Identity(n, n);
    OptimizerResult r;

    auto small_gradient = [&](const Eigen::VectorXd& grad, double fv, double tol) {
        return grad.cwiseAbs().maxCoeff() <= tol * std::max(1.0, std::abs(fv));
    };

    int it = 0;
    for (; it < opt.max_iterations; ++it) {
        if (!std::isfinite(f)) {
            r.message = "objective not finite";
            break;
        }
        if (small_gradient(g, f, opt.gradient_tolerance)) {
            r.converged = true;
            r.message = "gradient tolerance reached";
            break;
        }
        Eigen::VectorXd dir = -H * g;
        double slope = g.dot(dir);
        if (!(slope < 0)) {
            H.setIdentity();
            dir = -g;
            slope = -g.squaredNorm();
        }
        double step = 1.0;
        Eigen::VectorXd x_new(n), g_new(n);
        double f_new = 0;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            x_new = x + step * dir;
            f_new = fn(x_new, g_new);
            if (std::isfinite(f_new) && f_new <= f + 1e-4 * step * slope) {
                accepted = true;
                break;
            }
            // quadratic interpolation, safeguarded
            double next = 0.5 * step;
            if (std::isfinite(f_new)) {
                const double denom = 2.0 * (f_new - f - slope * step);
                if (denom > 0) next = std::clamp(-slope * step * step / denom, 0.1 * step, 0.5 * step);
            }
            step = next;
        }
        if (!accepted) {
            r.converged = small_gradient(g, f, std::sqrt(opt.gradient_tolerance));
            r.message = "line search failed";
            break;
        }
        const Eigen::VectorXd s = x_new - x;
        const Eigen::VectorXd y = g_new - g;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            if (it == 0 && !inverse_hessian) H *= sy / y.squaredNorm();
            const double rho = 1.0 / sy;
            const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
            H = (I - rho * s * y.transpose()) * H * (I - rho * y * s.transpose()) + rho * s * s.transpose();
        }
        x = x_new;
        g = g_new;
        const double df = f - f_new;
        f = f_new;
        if (df >= 0 && df <= 1e-16 * std::max(1.0, std::abs(f)) && s.cwiseAbs().maxCoeff() < 1e-14) {
            r.converged = small_gradient(g, f, std::sqrt(opt.gradient_tolerance));
            r.message = "no further progress";
            ++it;
            break;
        }
    }
    if (it == opt.max_iterations && !r.converged) r.message = "iteration limit reached";
    r.x = std::move(x);
    r.gradient = std::move(g);
    r.value = f;
    r.iterations = it;
    return r;
}

/// Symmetric Hessian by central differences of an analytic gradient.
template <class GradFn>
Eigen::MatrixXd numerical_hessian(GradFn&& grad, const Eigen::VectorXd& x, double rel_step = 1e-5) {
    const auto n = x.size();
    Eigen::MatrixXd Hm(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const double h = rel_step * std::max(1.0, std::abs(x(j)));
        Eigen::VectorXd xp = x, xm = x;
        xp(j) += h;
        xm(j) -= h;
        Hm.col(j) = (grad(xp) - grad(xm)) / (2.0 * h);
    }
    return 0.5 * (Hm + Hm.transpose());
}

}  // namespace invdp
