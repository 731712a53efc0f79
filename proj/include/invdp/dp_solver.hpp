#pragma once

// Discrete dynamic programming for the integrated (logit) Bellman equation:
// value iteration, policy valuation, CCPs and ergodic distributions.

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "invdp/errors.hpp"
#include "invdp/log.hpp"
#include "invdp/model_core.hpp"
#include "invdp/stats.hpp"

namespace invdp {

using ValueVector = Eigen::VectorXd;
using CcpTable = Eigen::MatrixXd;  // |X| x |Y|
using Transition = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Labels and per-state demand moments. Toy models may leave these defaulted.
struct StateInfo {
    int k = 0;
    int price_cluster = 0;
    int q_cluster = 0;
    int q_lag_cluster = -1;  ///< >= 0 only on models augmented with a lagged Q state
    bool weekend = false;
    bool holiday = false;
    double price = 0.0;
    double expected_sales = 0.0;
    double stockout_prob = 0.0;
};

/// States X, actions Y, one row-stochastic |X|x|X| transition matrix and one
/// |X|x5 feature matrix per action.
struct DiscreteModel {
    std::vector<int> actions;
    std::vector<Transition> transitions;
    std::vector<Eigen::MatrixXd> features;
    std::vector<StateInfo> states;

    Eigen::Index n_states() const { return transitions.empty() ? 0 : transitions.front().rows(); }
    Eigen::Index n_actions() const { return static_cast<Eigen::Index>(actions.size()); }

    void validate(double tol = 1e-10) const {
        if (actions.empty()) throw DomainError("DiscreteModel: no actions");
        if (transitions.size() != actions.size() || features.size() != actions.size())
            throw DomainError("DiscreteModel: one transition and feature matrix per action required");
        const Eigen::Index n = n_states();
        if (n == 0) throw DomainError("DiscreteModel: no states");
        if (!states.empty() && static_cast<Eigen::Index>(states.size()) != n)
            throw DomainError("DiscreteModel: state labels do not match transition size");
        for (std::size_t a = 0; a < actions.size(); ++a) {
            const Transition& F = transitions[a];
            if (F.rows() != n || F.cols() != n) throw DomainError("DiscreteModel: transition not square");
            if (features[a].rows() != n || features[a].cols() != 5)
                throw DomainError("DiscreteModel: feature matrix must be |X| x 5");
            if (!features[a].allFinite()) throw DomainError("DiscreteModel: non-finite features");
            for (Eigen::Index r = 0; r < n; ++r) {
                double s = 0.0;
                for (Transition::InnerIterator it(F, r); it; ++it) {
                    if (it.value() < 0) throw DomainError("DiscreteModel: negative transition probability");
                    s += it.value();
                }
                if (std::abs(s - 1.0) > tol)
                    throw DomainError("DiscreteModel: transition row " + std::to_string(r) + " for action " +
                                      std::to_string(actions[a]) + " sums to " + std::to_string(s));
            }
        }
    }
};

// ---------------------------------------------------------------------------
// Building blocks. gamma is the scaled payoff vector (1, gh, gz, gf, gc)/sigma.

inline Eigen::MatrixXd flow_utilities(const DiscreteModel& m, const Vector5& gamma) {
    Eigen::MatrixXd u(m.n_states(), m.n_actions());
    for (Eigen::Index a = 0; a < m.n_actions(); ++a) u.col(a) = m.features[a] * gamma;
    return u;
}

inline Eigen::MatrixXd action_values(const DiscreteModel& m, const Vector5& gamma, double beta,
                                     const ValueVector& V) {
    Eigen::MatrixXd q(m.n_states(), m.n_actions());
    for (Eigen::Index a = 0; a < m.n_actions(); ++a)
        q.col(a) = m.features[a] * gamma + beta * (m.transitions[a] * V);
    return q;
}

inline ValueVector log_sum_exp_rows(const Eigen::MatrixXd& q) {
    const Eigen::VectorXd mx = q.rowwise().maxCoeff();
    return mx.array() + (q.colwise() - mx).array().exp().rowwise().sum().log();
}

inline CcpTable softmax_rows(const Eigen::MatrixXd& q) {
    const Eigen::VectorXd mx = q.rowwise().maxCoeff();
    Eigen::MatrixXd e = (q.colwise() - mx).array().exp().matrix();
    const Eigen::VectorXd s = e.rowwise().sum();
    return e.array().colwise() / s.array();
}

inline ValueVector bellman_operator(const DiscreteModel& m, const Vector5& gamma, double beta, const ValueVector& V) {
    return log_sum_exp_rows(action_values(m, gamma, beta, V));
}

/// M(x'|x) = sum_y P(y|x) F_x(y)(x'|x).
inline Transition controlled_transition(const DiscreteModel& m, const CcpTable& P) {
    Transition M(m.n_states(), m.n_states());
    for (Eigen::Index a = 0; a < m.n_actions(); ++a) {
        Transition scaled = P.col(a).asDiagonal() * m.transitions[a];
        M = a == 0 ? scaled : Transition(M + scaled);
    }
    M.makeCompressed();
    return M;
}

/// sum_y P(y) * H(y): |X| x 5.
inline Eigen::MatrixXd expected_features(const DiscreteModel& m, const CcpTable& P) {
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(m.n_states(), 5);
    for (Eigen::Index a = 0; a < m.n_actions(); ++a) h += P.col(a).asDiagonal() * m.features[a];
    return h;
}

/// sum_y P(y) (c - ln P(y)); zero-probability actions contribute nothing.
inline Eigen::VectorXd choice_entropy_term(const CcpTable& P, double c) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(P.rows());
    for (Eigen::Index i = 0; i < P.rows(); ++i)
        for (Eigen::Index a = 0; a < P.cols(); ++a) {
            const double p = P(i, a);
            if (p > 0) e(i) += p * (c - std::log(p));
        }
    return e;
}

inline void check_ccp(const DiscreteModel& m, const CcpTable& P, bool strictly_positive) {
    if (P.rows() != m.n_states() || P.cols() != m.n_actions()) throw DomainError("CcpTable: wrong shape");
    for (Eigen::Index i = 0; i < P.rows(); ++i) {
        const double s = P.row(i).sum();
        if (!std::isfinite(s) || std::abs(s - 1.0) > 1e-8)
            throw SingularError("CcpTable: row " + std::to_string(i) + " does not sum to 1");
        if ((P.row(i).array() < 0).any() || (strictly_positive && (P.row(i).array() <= 0).any()))
            throw SingularError("CcpTable: row " + std::to_string(i) + " has non-positive entries");
    }
}

/// LU factorization of I - beta M. Rows of M are treated as summing to one
/// exactly: A x is formed as (1-beta) x_i - beta sum_j M_ij (x_j - x_i), and
/// solves are refined against that residual in extended precision. This keeps
/// the answer accurate when beta is close to one.
class PolicySystem {
public:
    PolicySystem(Transition M, double beta) : beta_(beta), M_(std::move(M)) {
        if (!(beta >= 0 && beta < 1)) throw SingularError("valuation: beta must lie in [0,1)");
        const Eigen::Index n = M_.rows();
        const double gap = 1.0 - beta;
        Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
        for (Eigen::Index r = 0; r < n; ++r) {
            A(r, r) = gap;
            for (Transition::InnerIterator it(M_, r); it; ++it) {
                if (it.col() == r) continue;
                A(r, it.col()) -= beta * it.value();
                A(r, r) += beta * it.value();
            }
        }
        lu_.compute(A);
        const double rc = lu_.rcond();
        if (!(rc > 1e-14)) throw SingularError("valuation: I - beta*M is singular (rcond " + std::to_string(rc) + ")");
    }

    Eigen::MatrixXd solve(const Eigen::MatrixXd& b) const {
        Eigen::MatrixXd x = lu_.solve(b);
        for (int pass = 0; pass < 3; ++pass) x += lu_.solve(residual(b, x));
        if (!x.allFinite()) throw SingularError("valuation: non-finite solution");
        return x;
    }

    double beta() const { return beta_; }

private:
    Eigen::MatrixXd residual(const Eigen::MatrixXd& b, const Eigen::MatrixXd& x) const {
        Eigen::MatrixXd r(b.rows(), b.cols());
        for (Eigen::Index c = 0; c < b.cols(); ++c)
            for (Eigen::Index i = 0; i < M_.rows(); ++i) {
                const long double xi = x(i, c);
                long double drift = 0.0L;
                for (Transition::InnerIterator it(M_, i); it; ++it)
                    drift += static_cast<long double>(it.value()) * (x(it.col(), c) - xi);
                r(i, c) = static_cast<double>(static_cast<long double>(b(i, c)) -
                                              static_cast<long double>(1.0 - beta_) * xi + beta_ * drift);
            }
        return r;
    }

    double beta_;
    Transition M_;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
};

/// Policy value sum_t beta^t E[u + c - ln P] under a fixed CCP. With c = Euler's
/// constant this is the valuation mapping; with c = 0 and the logit CCP of V it
/// reproduces V itself.
inline ValueVector evaluate_policy(const DiscreteModel& m, const Vector5& gamma, double beta, const CcpTable& P,
                                   double c) {
    const Eigen::VectorXd b = expected_features(m, P) * gamma + choice_entropy_term(P, c);
    if (beta == 0.0) return b;
    PolicySystem sys(controlled_transition(m, P), beta);
    return sys.solve(b).col(0);
}

// ---------------------------------------------------------------------------
// Public operations.

/// Logit CCPs: softmax over actions of H(y)gamma + beta F(y) V.
inline CcpTable ccp_from_values(const DiscreteModel& m, const Vector5& gamma, double beta, const ValueVector& V) {
    if (!V.allFinite()) throw DomainError("ccp_from_values: non-finite values");
    return softmax_rows(action_values(m, gamma, beta, V));
}

inline CcpTable ccp_from_values(const DiscreteModel& m, const StructuralParams& params, const ValueVector& V) {
    return ccp_from_values(m, params.scaled(), params.beta, V);
}

/// V = [I - beta sum_y P(y)*F(y)]^{-1} sum_y P(y)*(H(y)gamma + euler - ln P(y)).
inline ValueVector valuation(const DiscreteModel& m, const Vector5& gamma, double beta, const CcpTable& P) {
    check_ccp(m, P, true);
    return evaluate_policy(m, gamma, beta, P, kEulerGamma);
}

inline ValueVector valuation(const DiscreteModel& m, const StructuralParams& params, const CcpTable& P) {
    return valuation(m, params.scaled(), params.beta, P);
}

enum class BellmanMethod { Hybrid, ValueIteration };

struct BellmanOptions {
    BellmanMethod method = BellmanMethod::Hybrid;
    double tolerance = 1e-10;
    int max_sweeps = 100000;
    int warmup_sweeps = 20;
    int max_policy_steps = 100;
    bool record_residuals = false;
};

struct BellmanReport {
    ValueVector values;
    int sweeps = 0;
    int policy_steps = 0;
    double residual = 0.0;
    double tolerance_used = 0.0;
    std::vector<double> residuals;  ///< sup-norm updates per sweep when recorded
};

/// Sup-norm tolerance, widened to a few ulps of |V| when values are large.
inline double bellman_tolerance(double tol, const ValueVector& V) {
    const double scale = V.size() ? V.cwiseAbs().maxCoeff() : 0.0;
    return std::max(tol, 64.0 * std::numeric_limits<double>::epsilon() * scale);
}

/// Solves V = ln sum_y exp(H(y)gamma + beta F(y) V).
/// Hybrid: a few value-iteration sweeps, then logit policy iteration (Newton
/// steps on the fixed point) until the Bellman residual meets the tolerance.
inline BellmanReport solve_bellman_report(const DiscreteModel& m, const Vector5& gamma, double beta,
                                          const BellmanOptions& opt = {}) {
    if (!(beta >= 0 && beta < 1)) throw DomainError("solve_bellman: beta must lie in [0,1)");
    if (!gamma.allFinite()) throw DomainError("solve_bellman: non-finite payoff parameters");
    BellmanReport rep;
    ValueVector V = ValueVector::Zero(m.n_states());

    const int sweeps = opt.method == BellmanMethod::ValueIteration ? opt.max_sweeps
                                                                    : std::min(opt.warmup_sweeps, opt.max_sweeps);
    for (int it = 0; it < sweeps; ++it) {
        ValueVector next = bellman_operator(m, gamma, beta, V);
        if (!next.allFinite()) throw ConvergenceError("solve_bellman: non-finite values", INFINITY, it);
        const Eigen::VectorXd delta = next - V;
        const double diff = delta.cwiseAbs().maxCoeff();
        V.swap(next);
        ++rep.sweeps;
        if (opt.record_residuals) rep.residuals.push_back(diff);
        rep.residual = diff;
        rep.tolerance_used = bellman_tolerance(opt.tolerance, V);
        if (diff <= rep.tolerance_used) {
            // Midpoint of the McQueen-Porteus bounds on the fixed point.
            if (beta > 0) V.array() += beta / (1.0 - beta) * 0.5 * (delta.minCoeff() + delta.maxCoeff());
            rep.values = std::move(V);
            return rep;
        }
    }
    if (opt.method == BellmanMethod::ValueIteration)
        throw ConvergenceError("solve_bellman: value iteration did not converge", rep.residual, rep.sweeps);

    for (int step = 0; step < opt.max_policy_steps; ++step) {
        const CcpTable P = ccp_from_values(m, gamma, beta, V);
        ValueVector next = evaluate_policy(m, gamma, beta, P, 0.0);
        const ValueVector tv = bellman_operator(m, gamma, beta, next);
        ++rep.policy_steps;
        rep.residual = (tv - next).cwiseAbs().maxCoeff();
        rep.tolerance_used = bellman_tolerance(opt.tolerance, next);
        if (!tv.allFinite()) throw ConvergenceError("solve_bellman: non-finite values", INFINITY, rep.sweeps);
        V = tv;
        if (rep.residual <= rep.tolerance_used) {
            rep.values = std::move(V);
            return rep;
        }
    }
    throw ConvergenceError("solve_bellman: policy iteration did not converge", rep.residual,
                           rep.sweeps + rep.policy_steps);
}

inline ValueVector solve_bellman(const DiscreteModel& m, const StructuralParams& params,
                                 const BellmanOptions& opt = {}) {
    params.validate();
    return solve_bellman_report(m, params.scaled(), params.beta, opt).values;
}

/// Optimal CCPs and the matching integrated values.
struct PolicySolution {
    ValueVector values;
    CcpTable ccp;
};

inline PolicySolution solve_policy(const DiscreteModel& m, const Vector5& gamma, double beta,
                                   const BellmanOptions& opt = {}) {
    PolicySolution s;
    s.values = solve_bellman_report(m, gamma, beta, opt).values;
    s.ccp = ccp_from_values(m, gamma, beta, s.values);
    return s;
}

inline PolicySolution solve_policy(const DiscreteModel& m, const StructuralParams& params,
                                   const BellmanOptions& opt = {}) {
    params.validate();
    return solve_policy(m, params.scaled(), params.beta, opt);
}

// ---------------------------------------------------------------------------
// Ergodic distribution.

/// Number of closed communicating classes of the chain's support graph.
inline int count_closed_classes(const Transition& M) {
    const int n = static_cast<int>(M.rows());
    std::vector<int> index(n, -1), low(n, 0), comp(n, -1), stack;
    std::vector<char> on_stack(n, 0);
    int counter = 0, n_comp = 0;
    struct Frame {
        int v;
        Transition::InnerIterator it;
    };
    for (int root = 0; root < n; ++root) {
        if (index[root] >= 0) continue;
        std::vector<Frame> call;
        auto push = [&](int v) {
            index[v] = low[v] = counter++;
            stack.push_back(v);
            on_stack[v] = 1;
            call.push_back({v, Transition::InnerIterator(M, v)});
        };
        push(root);
        while (!call.empty()) {
            Frame& f = call.back();
            bool descended = false;
            for (; f.it; ++f.it) {
                if (f.it.value() <= 0) continue;
                const int w = static_cast<int>(f.it.col());
                if (index[w] < 0) {
                    ++f.it;
                    push(w);
                    descended = true;
                    break;
                }
                if (on_stack[w]) low[f.v] = std::min(low[f.v], index[w]);
            }
            if (descended) continue;
            const int v = f.v;
            if (low[v] == index[v]) {
                int w;
                do {
                    w = stack.back();
                    stack.pop_back();
                    on_stack[w] = 0;
                    comp[w] = n_comp;
                } while (w != v);
                ++n_comp;
            }
            call.pop_back();
            if (!call.empty()) low[call.back().v] = std::min(low[call.back().v], low[v]);
        }
    }
    std::vector<char> leaks(n_comp, 0);
    for (int r = 0; r < n; ++r)
        for (Transition::InnerIterator it(M, r); it; ++it)
            if (it.value() > 0 && comp[it.col()] != comp[r]) leaks[comp[r]] = 1;
    return static_cast<int>(std::count(leaks.begin(), leaks.end(), 0));
}

struct ErgodicOptions {
    double tolerance = 1e-12;
    int max_iterations = 2000000;
};

namespace detail {

/// Direct solve of pi (I - M) = 0 with sum(pi) = 1 replacing one equation.
inline std::optional<Eigen::VectorXd> stationary_direct(const Transition& M) {
    const Eigen::Index n = M.rows();
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n) - Eigen::MatrixXd(M).transpose();
    A.row(n - 1).setOnes();
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
    b(n - 1) = 1.0;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
    Eigen::VectorXd pi = lu.solve(b);
    if (!pi.allFinite()) return std::nullopt;
    pi = pi.cwiseMax(0.0);
    const double s = pi.sum();
    if (!(s > 0)) return std::nullopt;
    return Eigen::VectorXd(pi / s);
}

}  // namespace detail

/// Stationary distribution of a row-stochastic matrix by power iteration on
/// the lazy chain (M + I)/2. An irreducible chain starts from the direct
/// linear solve; otherwise from uniform.
inline Eigen::VectorXd stationary_distribution(const Transition& M, const ErgodicOptions& opt = {}) {
    const Eigen::Index n = M.rows();
    if (n == 0 || M.cols() != n) throw DomainError("ergodic_distribution: matrix must be square and nonempty");
    const int closed = count_closed_classes(M);
    if (closed > 1)
        log().warn("ergodic_distribution: chain has {} closed classes; returning the limit from a uniform start",
                   closed);
    const Eigen::SparseMatrix<double> Mt = M.transpose();
    Eigen::VectorXd pi = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
    if (closed == 1)
        if (auto direct = detail::stationary_direct(M)) pi = *direct;
    for (int it = 0; it < opt.max_iterations; ++it) {
        Eigen::VectorXd next = 0.5 * (pi + Mt * pi);
        next /= next.sum();
        const double diff = (next - pi).cwiseAbs().maxCoeff();
        pi.swap(next);
        if (diff <= opt.tolerance) {
            pi = pi.cwiseMax(0.0);
            return pi / pi.sum();
        }
    }
    throw ConvergenceError("ergodic_distribution: power iteration did not converge", (Mt * pi - pi).cwiseAbs().maxCoeff(),
                           opt.max_iterations);
}

inline Eigen::VectorXd ergodic_distribution(const DiscreteModel& m, const CcpTable& P,
                                            const ErgodicOptions& opt = {}) {
    check_ccp(m, P, false);
    return stationary_distribution(controlled_transition(m, P), opt);
}

}  // namespace invdp
