#pragma once

// Two-step pseudo-maximum-likelihood: kernel CCPs, then a logit
// pseudo-likelihood built on one valuation solve at the first-step CCPs.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "invdp/dp_solver.hpp"
#include "invdp/errors.hpp"
#include "invdp/inventory_model.hpp"
#include "invdp/log.hpp"

namespace invdp {

inline constexpr double kCcpFloor = 1e-6;
inline constexpr std::array<const char*, 5> kThetaNames{"inv_sigma", "gamma_h_scaled", "gamma_z_scaled",
                                                        "gamma_f_scaled", "gamma_c_scaled"};

/// Observed (state, action) pairs.
struct StateSample {
    std::vector<int> state;
    std::vector<int> action;

    std::size_t size() const { return state.size(); }
};

/// Rows of a built model with an available state; actions are grid indices.
inline StateSample panel_sample(const InventoryModel& im) {
    StateSample s;
    for (std::size_t i = 0; i < im.row_state.size(); ++i) {
        if (im.row_state[i] < 0) continue;
        s.state.push_back(im.row_state[i]);
        s.action.push_back(im.disc.y_index[i]);
    }
    return s;
}

/// Kernel coordinates per state: inventory, price level, ln(Q7+1) centers
/// (current and/or lagged), weekend, holiday.
inline Eigen::MatrixXd kernel_coordinates(const InventoryModel& im) {
    const auto& L = im.layout;
    const int d = L.info == InfoSet::Both ? 6 : 5;
    Eigen::MatrixXd c(L.n_states(), d);
    for (int e = 0; e < L.n_exo(); ++e) {
        const auto x = L.decode_exo(e);
        for (int k = 0; k < L.n_k; ++k) {
            const int s = L.state(k, e);
            int col = 0;
            c(s, col++) = im.disc.grids.k_value(k);
            c(s, col++) = im.disc.price.centers[x.pc];
            if (L.current_q(x.qs) >= 0) c(s, col++) = im.disc.logq.centers[L.current_q(x.qs)];
            if (L.lagged_q(x.qs) >= 0) c(s, col++) = im.disc.logq.centers[L.lagged_q(x.qs)];
            c(s, col++) = x.w;
            c(s, col++) = x.h;
        }
    }
    return c;
}

/// P(y|x) = sum_t 1{y_t=y} K(x_t - x) / sum_t K(x_t - x), K(u) = 1/(1 + sqrt(T)|u|)
/// on coordinates standardized by their sample standard deviations. Floored
/// at `floor` and renormalized.
inline CcpTable kernel_ccp(const Eigen::MatrixXd& coords, const StateSample& sample, Eigen::Index n_actions,
                           double floor = kCcpFloor) {
    if (sample.size() == 0) throw InsufficientDataError("kernel_ccp: empty sample");
    const Eigen::Index nx = coords.rows(), d = coords.cols();
    const double T = static_cast<double>(sample.size());

    Eigen::VectorXd scale = Eigen::VectorXd::Ones(d);
    for (Eigen::Index j = 0; j < d; ++j) {
        double m = 0.0, m2 = 0.0;
        for (int s : sample.state) {
            m += coords(s, j);
            m2 += coords(s, j) * coords(s, j);
        }
        m /= T;
        const double var = m2 / T - m * m;
        if (var > 1e-14 * std::max(1.0, m * m)) scale(j) = std::sqrt(var);
    }
    const Eigen::MatrixXd z = coords * scale.cwiseInverse().asDiagonal();

    // Aggregate observations by state.
    Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(nx, n_actions);
    for (std::size_t t = 0; t < sample.size(); ++t) {
        if (sample.state[t] < 0 || sample.state[t] >= nx || sample.action[t] < 0 || sample.action[t] >= n_actions)
            throw DomainError("kernel_ccp: observation outside the state or action space");
        counts(sample.state[t], sample.action[t]) += 1.0;
    }
    std::vector<Eigen::Index> occupied;
    for (Eigen::Index s = 0; s < nx; ++s)
        if (counts.row(s).sum() > 0) occupied.push_back(s);

    const double rt = std::sqrt(T);
    CcpTable P(nx, n_actions);
    for (Eigen::Index x = 0; x < nx; ++x) {
        Eigen::RowVectorXd num = Eigen::RowVectorXd::Zero(n_actions);
        for (Eigen::Index s : occupied) {
            const double w = 1.0 / (1.0 + rt * (z.row(s) - z.row(x)).norm());
            num += w * counts.row(s);
        }
        num /= num.sum();
        num = num.cwiseMax(floor);
        P.row(x) = num / num.sum();
    }
    return P;
}

/// Raw conditional action frequencies per state (rows without observations are uniform).
inline CcpTable frequency_ccp(const StateSample& sample, Eigen::Index n_states, Eigen::Index n_actions) {
    CcpTable P = CcpTable::Zero(n_states, n_actions);
    for (std::size_t t = 0; t < sample.size(); ++t) P(sample.state[t], sample.action[t]) += 1.0;
    for (Eigen::Index x = 0; x < n_states; ++x) {
        const double s = P.row(x).sum();
        if (s > 0)
            P.row(x) /= s;
        else
            P.row(x).setConstant(1.0 / n_actions);
    }
    return P;
}

/// Q(P, theta) by direct valuation and logit: sum_t ln psi(y_t | x_t).
inline double pseudo_loglik(const Vector5& theta, const CcpTable& P, const DiscreteModel& m, double beta,
                            const StateSample& sample) {
    const ValueVector V = valuation(m, theta, beta, P);
    const Eigen::MatrixXd q = action_values(m, theta, beta, V);
    const Eigen::VectorXd lse = log_sum_exp_rows(q);
    double ll = 0.0;
    for (std::size_t t = 0; t < sample.size(); ++t)
        ll += q(sample.state[t], sample.action[t]) - lse(sample.state[t]);
    return ll;
}

/// psi = logit(valuation(P)): one policy-iteration step.
inline CcpTable psi_mapping(const DiscreteModel& m, const Vector5& theta, double beta, const CcpTable& P) {
    return ccp_from_values(m, theta, beta, valuation(m, theta, beta, P));
}

/// Pseudo-likelihood with the valuation pre-solved. V(theta) = W theta + w0 is
/// linear at fixed P, so each action value is Z(x,y) theta + z0(x,y) and Q is a
/// concave logit likelihood in theta.
class PseudoLikelihood {
public:
    PseudoLikelihood(const DiscreteModel& m, const CcpTable& P, double beta, const StateSample& sample)
        : n_actions_(m.n_actions()) {
        check_ccp(m, P, true);
        const Eigen::Index nx = m.n_states();
        Eigen::MatrixXd rhs(nx, 6);
        rhs.leftCols(5) = expected_features(m, P);
        rhs.col(5) = choice_entropy_term(P, kEulerGamma);
        Eigen::MatrixXd sol;
        if (beta == 0.0) {
            sol = rhs;
        } else {
            PolicySystem sys(controlled_transition(m, P), beta);
            sol = sys.solve(rhs);
        }

        Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(nx, n_actions_);
        for (std::size_t t = 0; t < sample.size(); ++t) counts(sample.state[t], sample.action[t]) += 1.0;
        for (Eigen::Index x = 0; x < nx; ++x)
            if (counts.row(x).sum() > 0) states_.push_back(x);
        n_obs_ = static_cast<double>(sample.size());

        const auto ns = static_cast<Eigen::Index>(states_.size());
        Z_.assign(n_actions_, Eigen::MatrixXd(ns, 5));
        z0_.assign(n_actions_, Eigen::VectorXd(ns));
        counts_.resize(ns, n_actions_);
        for (Eigen::Index a = 0; a < n_actions_; ++a) {
            const Eigen::MatrixXd next = beta * (m.transitions[a] * sol);
            for (Eigen::Index i = 0; i < ns; ++i) {
                const Eigen::Index x = states_[i];
                Z_[a].row(i) = m.features[a].row(x) + next.row(x).head(5);
                z0_[a](i) = next(x, 5);
                counts_(i, a) = counts(x, a);
            }
        }
    }

    double n_obs() const { return n_obs_; }

    Eigen::MatrixXd action_values(const Vector5& theta) const {
        Eigen::MatrixXd v(static_cast<Eigen::Index>(states_.size()), n_actions_);
        for (Eigen::Index a = 0; a < n_actions_; ++a) v.col(a) = Z_[a] * theta + z0_[a];
        return v;
    }

    /// Q, gradient and Hessian in theta.
    double value(const Vector5& theta, Vector5* grad = nullptr, Eigen::Matrix<double, 5, 5>* hess = nullptr) const {
        const Eigen::MatrixXd v = action_values(theta);
        const CcpTable p = softmax_rows(v);
        const Eigen::VectorXd lse = log_sum_exp_rows(v);
        double ll = 0.0;
        if (grad) grad->setZero();
        if (hess) hess->setZero();
        for (Eigen::Index i = 0; i < v.rows(); ++i) {
            const double ni = counts_.row(i).sum();
            Vector5 zbar = Vector5::Zero();
            for (Eigen::Index a = 0; a < n_actions_; ++a) zbar += p(i, a) * Z_[a].row(i).transpose();
            for (Eigen::Index a = 0; a < n_actions_; ++a) {
                const double n = counts_(i, a);
                if (n > 0) {
                    ll += n * (v(i, a) - lse(i));
                    if (grad) *grad += n * Z_[a].row(i).transpose();
                }
                if (hess) {
                    const Vector5 dz = Z_[a].row(i).transpose() - zbar;
                    *hess -= ni * p(i, a) * dz * dz.transpose();
                }
            }
            if (grad) *grad -= ni * zbar;
        }
        return ll;
    }

    /// Outer product of per-observation scores.
    Eigen::Matrix<double, 5, 5> score_outer_product(const Vector5& theta) const {
        const Eigen::MatrixXd v = action_values(theta);
        const CcpTable p = softmax_rows(v);
        Eigen::Matrix<double, 5, 5> B = Eigen::Matrix<double, 5, 5>::Zero();
        for (Eigen::Index i = 0; i < v.rows(); ++i) {
            Vector5 zbar = Vector5::Zero();
            for (Eigen::Index a = 0; a < n_actions_; ++a) zbar += p(i, a) * Z_[a].row(i).transpose();
            for (Eigen::Index a = 0; a < n_actions_; ++a) {
                if (counts_(i, a) <= 0) continue;
                const Vector5 s = Z_[a].row(i).transpose() - zbar;
                B += counts_(i, a) * s * s.transpose();
            }
        }
        return B;
    }

private:
    Eigen::Index n_actions_;
    std::vector<Eigen::Index> states_;
    std::vector<Eigen::MatrixXd> Z_;
    std::vector<Eigen::VectorXd> z0_;
    Eigen::MatrixXd counts_;
    double n_obs_ = 0.0;
};

struct StructuralFit {
    Vector5 gamma_tilde = Vector5::Zero();  ///< (1/sigma, gamma_h/sigma, gamma_z/sigma, gamma_f/sigma, gamma_c/sigma)
    Vector5 se_tilde = Vector5::Zero();
    std::array<double, 4> dollar{};  ///< gamma_h, gamma_z, gamma_f, gamma_c
    std::array<double, 4> dollar_se{};
    Eigen::Matrix<double, 5, 5> cov_tilde = Eigen::Matrix<double, 5, 5>::Zero();
    double pseudo_loglik = 0.0;
    int n_obs = 0;
    int iterations = 0;
    double gradient_norm = 0.0;  ///< max |dQ/dphi| / n at the optimum
    bool converged = false;
    double floor_sensitivity = std::numeric_limits<double>::quiet_NaN();  ///< max relative change in dollar costs at a 10x floor

    StructuralParams params(double beta) const { return StructuralParams::from_scaled(gamma_tilde, beta); }
    double t_stat(int j) const { return dollar_se[j] > 0 ? dollar[j] / dollar_se[j] : 0.0; }
};

struct PmlOptions {
    int max_iterations = 200;
    double gradient_tolerance = 1e-9;  ///< on max |dQ/dphi| / n
    double decrement_tolerance = 1e-14;  ///< on the Newton decrement of Q / n
    bool floor_sensitivity = false;
};

namespace detail {

/// Newton with Levenberg damping on phi = (ln theta_1, theta_2..5).
inline Vector5 maximize_pml(const PseudoLikelihood& Q, Vector5 phi, const PmlOptions& opt, int& iterations,
                            double& grad_norm, bool& converged) {
    const double n = Q.n_obs();
    auto to_theta = [](const Vector5& f) {
        Vector5 t = f;
        t(0) = std::exp(f(0));
        return t;
    };
    auto eval = [&](const Vector5& f, Vector5* g, Eigen::Matrix<double, 5, 5>* H) {
        const Vector5 t = to_theta(f);
        Vector5 gt;
        Eigen::Matrix<double, 5, 5> Ht;
        const double v = Q.value(t, g ? &gt : nullptr, H ? &Ht : nullptr);
        if (H) {
            *H = Ht;
            H->row(0) *= t(0);
            H->col(0) *= t(0);
            (*H)(0, 0) += gt(0) * t(0);
            *H /= n;
        }
        if (g) {
            *g = gt;
            (*g)(0) *= t(0);
            *g /= n;
        }
        return v / n;
    };
    Vector5 g;
    Eigen::Matrix<double, 5, 5> H;
    double f = eval(phi, &g, &H);
    double mu = 0.0;
    converged = false;
    int it = 0;
    for (; it < opt.max_iterations; ++it) {
        if (g.cwiseAbs().maxCoeff() < opt.gradient_tolerance) {
            converged = true;
            break;
        }
        // Newton decrement: the remaining gain in Q/n is below floating-point resolution.
        if (Eigen::LDLT<Eigen::Matrix<double, 5, 5>> ldlt(-H); ldlt.info() == Eigen::Success && ldlt.isPositive()) {
            const double dec = g.dot(ldlt.solve(g));
            if (dec >= 0 && dec < opt.decrement_tolerance) {
                converged = true;
                break;
            }
        }
        // Scale-invariant damping: N = -H + mu diag(|H|).
        bool stepped = false;
        for (int tries = 0; tries < 60 && !stepped; ++tries) {
            Eigen::Matrix<double, 5, 5> N = -H;
            for (int j = 0; j < 5; ++j) N(j, j) += mu * std::max(std::abs(H(j, j)), 1e-12);
            Eigen::LLT<Eigen::Matrix<double, 5, 5>> llt(N);
            if (llt.info() == Eigen::Success) {
                Vector5 step = llt.solve(g);
                step(0) = std::clamp(step(0), -2.0, 2.0);
                const Vector5 cand = phi + step;
                const double fc = eval(cand, nullptr, nullptr);
                if (std::isfinite(fc) && fc >= f - 1e-15 * std::abs(f)) {
                    const bool progress = fc > f + 8 * std::numeric_limits<double>::epsilon() * std::abs(f);
                    phi = cand;
                    f = eval(phi, &g, &H);
                    mu = mu > 0 ? mu / 4.0 : 0.0;
                    if (mu < 1e-10) mu = 0.0;
                    stepped = true;
                    if (!progress && g.cwiseAbs().maxCoeff() < 1e3 * opt.gradient_tolerance) {
                        converged = true;
                        it = opt.max_iterations;  // no further improvement possible in floating point
                    }
                    break;
                }
            }
            mu = mu > 0 ? mu * 4.0 : 1e-6;
        }
        if (!stepped) {
            converged = g.cwiseAbs().maxCoeff() < 1e3 * opt.gradient_tolerance;
            break;
        }
    }
    iterations = std::min(it, opt.max_iterations);
    grad_norm = g.cwiseAbs().maxCoeff();
    if (grad_norm < opt.gradient_tolerance) converged = true;
    return phi;
}

/// Covariance from an inverse outer-product matrix; directions with no
/// information get infinite variance.
inline Eigen::Matrix<double, 5, 5> inverse_with_flat_directions(const Eigen::Matrix<double, 5, 5>& B) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 5, 5>> es(B);
    const Vector5 ev = es.eigenvalues();
    const Eigen::Matrix<double, 5, 5> U = es.eigenvectors();
    const double top = std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
    Eigen::Matrix<double, 5, 5> C = Eigen::Matrix<double, 5, 5>::Zero();
    for (int i = 0; i < 5; ++i) {
        if (ev(i) > 1e-13 * top) {
            C += U.col(i) * U.col(i).transpose() / ev(i);
        } else {
            for (int j = 0; j < 5; ++j)
                if (std::abs(U(j, i)) > 1e-8) C(j, j) = std::numeric_limits<double>::infinity();
        }
    }
    return C;
}

inline StructuralFit fit_pml(const DiscreteModel& m, const CcpTable& P, double beta, const StateSample& sample,
                             const PmlOptions& opt) {
    const PseudoLikelihood Q(m, P, beta, sample);
    // Costs at zero and the best theta_1 on a coarse grid. A large theta_1 can
    // saturate the logit, where the Hessian vanishes and Newton stalls.
    Vector5 phi = Vector5::Zero();
    double best = -std::numeric_limits<double>::infinity();
    for (double t1 : {1e-4, 1e-3, 1e-2, 1e-1, 1.0}) {
        Vector5 theta = Vector5::Zero();
        theta(0) = t1;
        if (const double q = Q.value(theta); q > best) {
            best = q;
            phi(0) = std::log(t1);
        }
    }
    StructuralFit fit;
    phi = maximize_pml(Q, phi, opt, fit.iterations, fit.gradient_norm, fit.converged);
    if (!fit.converged)
        throw ConvergenceError("two_step_pml: pseudo-likelihood maximization did not converge (gradient norm " +
                                   std::to_string(fit.gradient_norm) + ")",
                               fit.gradient_norm, fit.iterations);
    Vector5 theta = phi;
    theta(0) = std::exp(phi(0));
    fit.gamma_tilde = theta;
    fit.pseudo_loglik = Q.value(theta);
    fit.n_obs = static_cast<int>(sample.size());

    fit.cov_tilde = inverse_with_flat_directions(Q.score_outer_product(theta));
    for (int j = 0; j < 5; ++j) fit.se_tilde(j) = std::sqrt(std::max(0.0, fit.cov_tilde(j, j)));
    for (int j = 0; j < 4; ++j) {
        fit.dollar[j] = theta(j + 1) / theta(0);
        Vector5 grad = Vector5::Zero();
        grad(0) = -theta(j + 1) / (theta(0) * theta(0));
        grad(j + 1) = 1.0 / theta(0);
        double var = 0.0;
        bool infinite = false;
        for (int a = 0; a < 5; ++a)
            for (int b = 0; b < 5; ++b) {
                if (grad(a) == 0.0 || grad(b) == 0.0) continue;
                if (!std::isfinite(fit.cov_tilde(a, b))) infinite = true;
                else var += grad(a) * fit.cov_tilde(a, b) * grad(b);
            }
        fit.dollar_se[j] = infinite ? std::numeric_limits<double>::infinity() : std::sqrt(std::max(0.0, var));
    }
    return fit;
}

}  // namespace detail

/// Second step: maximizes Q(P, theta) over theta with theta_1 > 0
/// (log-parameterized). Standard errors from the inverse outer product of scores.
inline StructuralFit two_step_pml(const DiscreteModel& m, const CcpTable& P, double beta, const StateSample& sample,
                                  const PmlOptions& opt = {}) {
    if (sample.size() == 0) throw InsufficientDataError("two_step_pml: empty sample");
    bool varied = false;
    for (std::size_t t = 1; t < sample.size() && !varied; ++t) varied = sample.action[t] != sample.action[0];
    if (!varied) throw InsufficientDataError("two_step_pml: insufficient variation in orders (one action observed)");
    auto fit = detail::fit_pml(m, P, beta, sample, opt);
    if (opt.floor_sensitivity) {
        CcpTable P2 = P.cwiseMax(10.0 * kCcpFloor);
        for (Eigen::Index x = 0; x < P2.rows(); ++x) P2.row(x) /= P2.row(x).sum();
        PmlOptions o = opt;
        o.floor_sensitivity = false;
        const auto alt = detail::fit_pml(m, P2, beta, sample, o);
        double worst = 0.0;
        for (int j = 0; j < 4; ++j)
            worst = std::max(worst, std::abs(alt.dollar[j] - fit.dollar[j]) / std::max(std::abs(fit.dollar[j]), 1e-12));
        fit.floor_sensitivity = worst;
    }
    return fit;
}

/// Kernel CCPs on the model's own sample, then two_step_pml.
inline StructuralFit estimate_structural(const InventoryModel& im, double beta, const PmlOptions& opt = {}) {
    const StateSample sample = panel_sample(im);
    if (sample.size() == 0) throw InsufficientDataError("estimate_structural: no usable rows");
    const CcpTable P = kernel_ccp(kernel_coordinates(im), sample, im.model.n_actions());
    return two_step_pml(im.model, P, beta, sample, opt);
}

}  // namespace invdp
