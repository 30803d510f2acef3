#pragma once

#include <functional>

#include "gkelab/gke.hpp"

namespace gkelab {

// One row of the per-step diagnostics ledger.
struct StepRecord {
  double t = 0, u = 0;  // u = log(1+t)
  int newton_iters = 0;
  double newton_residual = 0;   // sup |chi_t + ddbar phi - e^{k phi} F chi|
  double identity_residual = 0; // curvature identity on the compact region
  double margin = 0;            // min positivity margin density on the compact region
  double phi_sup = 0, phi_osc = 0;
  double trace_chi_max = 0;     // sup of chi / omega_base
  double weighted_trace_max = 0;  // sup sigma^l2 log(1 + chi0/((1+t) omega_base))
  double band_lo = 0, band_hi = 0;  // range of omega_base / (F chi)
  double rescaled_gap = 0;      // sup |psi - phi|
  double g_dev = 0;             // sup |g - 1| on the compact region
  double du_psi = 0;            // sup |d psi / d u| probe
  double lemma_decay = 0;       // sup |psi + d_u psi - phi_inf| on the compact
  double trace_decay = 0;       // sup |F chi e^{phi_inf} / eta - 1| on the compact
  double gke_gap = 0;           // sup |phi(t) - phi_inf|
  double fiber_diam = 0;        // largest fiber diameter at this t
};

struct ContinuityOptions {
  NewtonOptions newton;
  bool rescaled = true;     // run the change-of-variable step alongside
  bool track_limit = true;  // solve the generalized limit once and track the gap
  double compact_edge_frac = 0.15;
  double compact_core_factor = 2.0;
  double du_probe = 0.05;   // offset of the flow-derivative probe in u
  double lambda2 = 1.0;     // sigma exponent of the weighted trace statistic
};

struct ContinuityResult {
  std::vector<StepRecord> records;
  ScalarField phi;      // final reduced potential
  ScalarField psi;      // final rescaled potential (empty when disabled)
  ScalarField phi_inf;  // generalized limit (empty when disabled)
};

std::vector<double> geometric_schedule(double t0, double t1, int n);

// chi_t = chi0/(1+t) + t chi/(1+t) as a form on the solver mask.
BaseForm chi_t_form(const FibrationSpec& spec, double t);

// One reduced-family solve at parameter t (warm-started from phi).
SolveReport reduced_step(const FibrationSpec& spec, double t, ScalarField& phi,
                         const NewtonOptions& opt = {});

// The same fixed point through the rescaled variable u = log(1+t):
//   psi = (1 - e^-u) log[(chi_t + ddbar psi) / (F chi)].
SolveReport rescaled_step(const FibrationSpec& spec, double u, ScalarField& psi,
                          const NewtonOptions& opt = {});

// Sweep the schedule, warm-starting each step; on_step fires after each
// record is assembled (checkpointing hook, with the reduced and rescaled
// potentials of that state). start_index/phi_start resume a partially
// completed sweep; psi_start restores the rescaled track so a resumed sweep
// reproduces the uninterrupted one exactly.
ContinuityResult run_continuity(
    const FibrationSpec& spec, const std::vector<double>& t_values,
    const ContinuityOptions& opt = {}, const ScalarField* phi_start = nullptr,
    size_t start_index = 0,
    const std::function<void(size_t, const StepRecord&, const ScalarField&, const ScalarField&)>&
        on_step = {},
    const ScalarField* psi_start = nullptr);

struct EnvelopeFit {
  double rate = 0;      // slope of log(du_psi) against u
  double log_c = 0;     // intercept
  double envelope_const = 0;  // max of du_psi * e^u over the fitted rows
  double ratio = 0;     // envelope_const / (last du_psi * e^u)
  int n_used = 0;
};

// Least-squares exponential envelope of the flow-derivative column.
EnvelopeFit fit_decay_envelope(const std::vector<StepRecord>& records);

}  // namespace gkelab
