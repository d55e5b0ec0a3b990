#pragma once

#include <iosfwd>
#include <string>

#include <json.hpp>

#include "mxfar/estimator.hpp"
#include "mxfar/inference.hpp"
#include "mxfar/selection.hpp"
#include "mxfar/simulator.hpp"
#include "mxfar/spectral.hpp"

// Writers for every table the pipeline produces. Channels and lags are
// 1-based in all outputs, groups use the panel's 0-based labels, and numbers
// are written in shortest round-trip form ("nan" at gaps).

namespace mxfar {

/// channel,group,target_lag_channel,lag,u0,alpha,beta
void write_coefficients_csv(const CoefficientGrid& grid, std::ostream& out);
/// subject_id,group,channel,target_lag_channel,lag,u0,a,b
void write_random_effects_csv(const CoefficientGrid& grid, std::ostream& out);
/// Configuration, grid, variance components, per-channel and pooled sigma^2_eps, gaps.
[[nodiscard]] nlohmann::json fit_summary_json(const CoefficientGrid& grid);
[[nodiscard]] nlohmann::json config_json(const ModelConfig& config);

/// h,p,ref_channel,ref_lag,ape_q1..ape_qQ,ape,best_flag
void write_ape_csv(const ApeReport& report, std::ostream& out);

/// replicate,L_boot (kept replicates in replicate order)
void write_lboot_csv(const NonlinearityTestResult& result, std::ostream& out);
[[nodiscard]] nlohmann::json test_summary_json(const NonlinearityTestResult& result);

/// channel,group,target_lag_channel,lag,u0,estimate,lower,upper
void write_bands_csv(const CoefficientBand& band, std::ostream& out);

/// group,target,source,omega,u0,modulus,ci_lo,ci_hi,threshold,significant
void write_fpdc_csv(const EdgeSignificance& sig, std::ostream& out);
/// Threshold method, replicate counts, regimes and warnings of a significance run.
[[nodiscard]] nlohmann::json significance_json(const EdgeSignificance& sig);
/// group,target,source,omega,u0,re,im,modulus over every grid point (empty at gaps).
void write_fpdc_surface_csv(const std::vector<FpdcSurface>& surfaces, int n_channels, std::ostream& out);

/// group,regime,source,target,proportion
void write_network_csv(const NetworkSummary& summary, std::ostream& out);

/// Every GeneratorSpec field; channels in curves and ref_channel are 1-based.
[[nodiscard]] nlohmann::json generator_spec_json(const GeneratorSpec& spec);
/// Inverse of generator_spec_json; absent keys keep the kind's defaults. Throws SpecError.
[[nodiscard]] GeneratorSpec generator_spec_from_json(const nlohmann::json& j);

/// Generator spec, subject effects and true curves tabulated on `grid`.
[[nodiscard]] nlohmann::json simulation_json(const Simulation& sim, const ReferenceGrid& grid);

}  // namespace mxfar
