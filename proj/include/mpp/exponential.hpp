#pragma once

// Doleans-Dade exponentials of pure-jump finite-variation paths, the
// compensating process S(lambda) and the exponential-martingale ratio.

#include <cstdint>
#include <optional>
#include <vector>

#include "mpp/point_process.hpp"

namespace mpp {

/// A finite-variation path Y with Y_0 = 0: continuous increments spread
/// linearly over drift segments, plus jumps. Pieces are appended in time order.
class JumpPath {
 public:
  struct Piece {
    double t0 = 0.0;
    double t1 = 0.0;
    double increment = 0.0;
    bool jump = false;
  };

  void add_drift(double t0, double t1, double increment);
  void add_jump(double time, double delta);

  double value(double t) const;
  double continuous_part(double t) const;
  const std::vector<Piece>& pieces() const { return pieces_; }

 private:
  std::vector<Piece> pieces_;
  double end_ = 0.0;
};

/// E(Y)_t = exp(Y^c_t) * prod_{s <= t} (1 + dY_s). Log-space when every
/// factor is positive, a direct product otherwise.
double doleans(const JumpPath& path, double t);
/// log E(Y)_t; DegenerateError when some factor 1 + dY_s <= 0.
double log_doleans(const JumpPath& path, double t);
/// |E(Y)_t - (1 + int_0^t E(Y)_{s-} dY_s)| with the integral summed piece by piece.
double sde_residual(const JumpPath& path, double t);

/// S(lambda) along the path: jumps at atoms, drift on Poisson segments.
JumpPath s_lambda_path(const Integrand& w, const CompensatorModel& model, const EventStream& stream, double lambda,
                       double t);
double s_lambda(const Integrand& w, const CompensatorModel& model, const EventStream& stream, double lambda, double t,
                std::optional<double> k = std::nullopt);

/// e^{lambda X_t} / E(S(lambda))_t.
double martingale_ratio(const Integrand& w, const CompensatorModel& model, const EventStream& stream, double lambda,
                        double t, std::optional<double> k = std::nullopt);

/// log E[(e^{lambda X_t} / E(S(lambda))_t)^2] in closed form; requires a
/// state-independent kernel and integrand (nullopt otherwise).
std::optional<double> log_second_moment(const Integrand& w, const CompensatorModel& model, double lambda, double t);

struct MartingaleReport {
  double lambda = 0.0;
  double t = 0.0;
  std::size_t replicates = 0;
  double mean = 0.0;
  double standard_error = 0.0;
  double z = 0.0;
  /// Smallest jump of S(lambda) seen on any path (must exceed -1).
  double min_delta_s = 0.0;
  std::optional<double> log_second_moment;
  bool pass = false;
};

/// Monte-Carlo mean of the ratio over `replicates` seeded paths; passes when
/// it lies within 3 sample standard errors of 1.
MartingaleReport martingale_mean(const Integrand& w, const CompensatorModel& model, double lambda, double t,
                                 std::size_t replicates, std::uint64_t seed, unsigned workers = 1);

}  // namespace mpp
