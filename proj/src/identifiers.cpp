#include "novctl/identifiers.hpp"

#include <stdexcept>

namespace novctl {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

}  // namespace

Scheme IdentifierState::scheme() const {
    return std::visit(overloaded{
                          [](const HPassiveState&) { return Scheme::HPassive; },
                          [](const HSwappingState&) { return Scheme::HSwapping; },
                          [](const XPassiveState&) { return Scheme::XPassive; },
                          [](const XSwappingState&) { return Scheme::XSwapping; },
                      },
                      aux);
}

std::size_t IdentifierState::flat_size(Scheme s, int n, int p) {
    const auto N = static_cast<std::size_t>(n);
    const auto Pp = static_cast<std::size_t>(p);
    switch (s) {
        case Scheme::HPassive:
        case Scheme::XPassive: return Pp + N;
        case Scheme::HSwapping:
        case Scheme::XSwapping: return Pp + Pp * N + N;
    }
    return 0;
}

void IdentifierState::pack(std::span<double> out) const {
    std::size_t k = 0;
    for (Eigen::Index j = 0; j < thetahat.size(); ++j) out[k++] = thetahat(j);
    auto put_vec = [&](const VectorXd& v) {
        for (Eigen::Index i = 0; i < v.size(); ++i) out[k++] = v(i);
    };
    auto put_mat = [&](const MatrixXd& m) {
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            for (Eigen::Index r = 0; r < m.rows(); ++r) out[k++] = m(r, c);
    };
    std::visit(overloaded{
                   [&](const HPassiveState& s) { put_vec(s.hhat); },
                   [&](const XPassiveState& s) { put_vec(s.xhat); },
                   [&](const HSwappingState& s) {
                       put_mat(s.Omega);
                       put_vec(s.Omega0);
                   },
                   [&](const XSwappingState& s) {
                       put_mat(s.Omega);
                       put_vec(s.Omega0);
                   },
               },
               aux);
}

IdentifierState IdentifierState::unpack(Scheme s, int n, int p, std::span<const double> in) {
    std::size_t k = 0;
    auto get_vec = [&](int len) {
        VectorXd v(len);
        for (int i = 0; i < len; ++i) v(i) = in[k++];
        return v;
    };
    auto get_mat = [&](int rows, int cols) {
        MatrixXd m(rows, cols);
        for (int c = 0; c < cols; ++c)
            for (int r = 0; r < rows; ++r) m(r, c) = in[k++];
        return m;
    };
    IdentifierState st;
    st.thetahat = get_vec(p);
    switch (s) {
        case Scheme::HPassive: st.aux = HPassiveState{get_vec(n)}; break;
        case Scheme::XPassive: st.aux = XPassiveState{get_vec(n)}; break;
        case Scheme::HSwapping: {
            MatrixXd om = get_mat(p, n);
            st.aux = HSwappingState{om, get_vec(n)};
            break;
        }
        case Scheme::XSwapping: {
            MatrixXd om = get_mat(p, n);
            st.aux = XSwappingState{om, get_vec(n)};
            break;
        }
    }
    return st;
}

IdentifierState initial_state(Scheme s, const VectorXd& h0, const VectorXd& x0, const VectorXd& thetahat0) {
    const auto n = x0.size();
    const auto p = thetahat0.size();
    IdentifierState st;
    st.thetahat = thetahat0;
    switch (s) {
        case Scheme::HPassive: st.aux = HPassiveState{h0}; break;
        case Scheme::HSwapping: st.aux = HSwappingState{MatrixXd::Zero(p, n), -h0}; break;
        case Scheme::XPassive: st.aux = XPassiveState{x0}; break;
        case Scheme::XSwapping: st.aux = XSwappingState{MatrixXd::Zero(p, n), -x0}; break;
    }
    return st;
}

VectorXd epsilon(const IdentifierState& state, const VectorXd& h, const VectorXd& x) {
    return std::visit(overloaded{
                          [&](const HPassiveState& s) -> VectorXd { return h - s.hhat; },
                          [&](const HSwappingState& s) -> VectorXd {
                              return h + s.Omega0 - s.Omega.transpose() * state.thetahat;
                          },
                          [&](const XPassiveState& s) -> VectorXd { return x - s.xhat; },
                          [&](const XSwappingState& s) -> VectorXd {
                              return x + s.Omega0 - s.Omega.transpose() * state.thetahat;
                          },
                      },
                      state.aux);
}

VectorXd theta_dot(const IdentifierState& state, const VectorXd& eps, const MatrixXd& regressor,
                   const MatrixXd& P, const UpdateGains& gains, std::optional<Gate> gate) {
    const auto p = state.thetahat.size();
    if (gate && !gate->open()) return VectorXd::Zero(p);

    auto normalized = [&](const MatrixXd& Omega) -> VectorXd {
        return gains.gamma * (Omega * eps) / (1.0 + gains.nu * Omega.squaredNorm());
    };
    return std::visit(overloaded{
                          [&](const HPassiveState&) -> VectorXd { return gains.gamma * regressor * P * eps; },
                          [&](const XPassiveState&) -> VectorXd { return gains.gamma * regressor * P * eps; },
                          [&](const HSwappingState& s) -> VectorXd { return normalized(s.Omega); },
                          [&](const XSwappingState& s) -> VectorXd { return normalized(s.Omega); },
                      },
                      state.aux);
}

IdentifierState state_deriv(const IdentifierState& state, const DerivInputs& in) {
    IdentifierState d;
    d.thetahat = in.thetadot;
    std::visit(overloaded{
                   [&](const HPassiveState& s) {
                       const VectorXd err = in.h - s.hhat;
                       d.aux = HPassiveState{in.A * s.hhat + in.sigma * in.W.transpose() * (in.W * (in.P * err)) +
                                             in.Q.transpose() * in.thetadot};
                   },
                   [&](const HSwappingState& s) {
                       MatrixXd OmegaT_dot = in.A * s.Omega.transpose() + in.W.transpose();
                       VectorXd Omega0_dot = in.A * s.Omega0 + in.W.transpose() * state.thetahat -
                                             in.Q.transpose() * in.thetadot;
                       d.aux = HSwappingState{OmegaT_dot.transpose(), Omega0_dot};
                   },
                   [&](const XPassiveState& s) {
                       const MatrixXd& F = in.plant.F;
                       const MatrixXd As = in.A0 - in.sigma * F.transpose() * F * in.P;
                       d.aux = XPassiveState{As * (s.xhat - in.x) + in.plant.f + F.transpose() * state.thetahat};
                   },
                   [&](const XSwappingState& s) {
                       const MatrixXd& F = in.plant.F;
                       const MatrixXd As = in.A0 - in.sigma * F.transpose() * F * in.P;
                       MatrixXd OmegaT_dot = As * s.Omega.transpose() + F.transpose();
                       VectorXd Omega0_dot = As * (s.Omega0 + in.x) - in.plant.f;
                       d.aux = XSwappingState{OmegaT_dot.transpose(), Omega0_dot};
                   },
               },
               state.aux);
    return d;
}

VectorXd swapping_residual(const IdentifierState& state, const VectorXd& eps, const VectorXd& theta_true) {
    const VectorXd theta_err = theta_true - state.thetahat;
    return std::visit(overloaded{
                          [&](const HSwappingState& s) -> VectorXd { return eps - s.Omega.transpose() * theta_err; },
                          [&](const XSwappingState& s) -> VectorXd { return eps - s.Omega.transpose() * theta_err; },
                          [&](const auto&) -> VectorXd { return VectorXd::Zero(eps.size()); },
                      },
                      state.aux);
}

double lyapunov_value(const IdentifierState& state, const VectorXd& eps, const VectorXd& theta_true,
                      const MatrixXd& P, double gamma) {
    const VectorXd theta_err = theta_true - state.thetahat;
    const double param = theta_err.squaredNorm() / gamma;
    switch (state.scheme()) {
        case Scheme::HPassive:
        case Scheme::XPassive: return eps.dot(P * eps) + param;
        case Scheme::HSwapping:
        case Scheme::XSwapping: {
            const VectorXd res = swapping_residual(state, eps, theta_true);
            return res.dot(P * res) + param;
        }
    }
    return param;
}

}  // namespace novctl
