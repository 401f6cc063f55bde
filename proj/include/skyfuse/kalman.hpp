#pragma once

#include <Eigen/Dense>
#include <stdexcept>

namespace skyfuse {

// Constant-velocity filter over pixel coordinates. The state is
// (x, vx, y, vy) with one frame as the time unit, so velocities are in
// px/frame. All noise parameters are variances.
struct KalmanConfig {
    double initial_location_error = 200.0;  // px^2
    double initial_velocity_error = 200.0;  // (px/frame)^2
    double location_noise = 50.0;           // process noise, px^2
    double velocity_noise = 50.0;           // process noise, (px/frame)^2
    double measurement_noise = 100.0;       // px^2
};

struct KalmanState {
    Eigen::Vector4d x = Eigen::Vector4d::Zero();  // (x, vx, y, vy)
    Eigen::Matrix4d P = Eigen::Matrix4d::Zero();
};

namespace detail {

inline Eigen::Matrix4d kf_transition() {
    Eigen::Matrix4d F = Eigen::Matrix4d::Identity();
    F(0, 1) = 1.0;
    F(2, 3) = 1.0;
    return F;
}

inline Eigen::Matrix<double, 2, 4> kf_measurement() {
    Eigen::Matrix<double, 2, 4> H = Eigen::Matrix<double, 2, 4>::Zero();
    H(0, 0) = 1.0;
    H(1, 2) = 1.0;
    return H;
}

}  // namespace detail

// New track state at a measured position with unknown (zero) velocity.
inline KalmanState kf_init(double px, double py, const KalmanConfig& cfg = {}) {
    KalmanState s;
    s.x << px, 0.0, py, 0.0;
    s.P.diagonal() << cfg.initial_location_error, cfg.initial_velocity_error,
        cfg.initial_location_error, cfg.initial_velocity_error;
    return s;
}

inline void kf_predict(KalmanState& s, const KalmanConfig& cfg = {}) {
    const Eigen::Matrix4d F = detail::kf_transition();
    Eigen::Matrix4d Q = Eigen::Matrix4d::Zero();
    Q.diagonal() << cfg.location_noise, cfg.velocity_noise, cfg.location_noise,
        cfg.velocity_noise;
    s.x = F * s.x;
    s.P = F * s.P * F.transpose() + Q;
}

// Measurement update in Joseph form, which keeps the covariance symmetric
// positive definite through long update sequences.
inline void kf_update(KalmanState& s, double zx, double zy, const KalmanConfig& cfg = {}) {
    if (cfg.measurement_noise <= 0)
        throw std::invalid_argument("kf_update: measurement noise must be positive");
    const auto H = detail::kf_measurement();
    const Eigen::Matrix2d R = Eigen::Matrix2d::Identity() * cfg.measurement_noise;
    const Eigen::Vector2d z(zx, zy);
    const Eigen::Matrix2d S = H * s.P * H.transpose() + R;
    const Eigen::Matrix<double, 4, 2> K = s.P * H.transpose() * S.inverse();
    s.x += K * (z - H * s.x);
    const Eigen::Matrix4d IKH = Eigen::Matrix4d::Identity() - K * H;
    s.P = IKH * s.P * IKH.transpose() + K * R * K.transpose();
    s.P = 0.5 * (s.P + s.P.transpose()).eval();
}

}  // namespace skyfuse
