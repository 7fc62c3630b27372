#ifndef SEP_HARNESS_HPP
#define SEP_HARNESS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "sep/amp.hpp"
#include "sep/denoisers.hpp"
#include "sep/linops.hpp"
#include "sep/pipeline.hpp"
#include "sep/vamp.hpp"

namespace sep {

enum class MatrixKind { iid_gaussian, unit_column_mixing };

struct SyntheticSpec {
    int M = 2;
    int N = 3;
    int T = 1;
    BgPrior prior;
    double snr_db = 40.0;  // +inf means noiseless
    int num_instances = 1;
    uint64_t seed = 1;
    MatrixKind matrix_kind = MatrixKind::unit_column_mixing;
    void validate() const;
};

struct Instance {
    std::vector<double> x;  // ground truth, length N*T
    std::vector<double> y;  // mixtures, length M*T
    MixingModel model;
};

Instance generate_instance(const SyntheticSpec& spec);

struct MetricReport {
    std::vector<double> per_source_sdr;  // dB, capped to +-200
    std::vector<double> per_source_sir;
    std::vector<double> per_source_sar;
    std::vector<bool> degenerate;        // zero reference
    double nmse_db = 0.0;
};

MetricReport compute_metrics(const std::vector<std::vector<double>>& estimates,
                             const std::vector<std::vector<double>>& references);

struct SweepGrid {
    std::vector<double> thetas{1.0};
    std::vector<int> max_iters{30};
};

struct SweepOptions {
    double tol = 0.0;  // exact-iteration sweeps by default
    bool em_noise = false;
    GammaUpdate gamma_update = GammaUpdate::printed;
    GammaTildeForm gamma_tilde_form = GammaTildeForm::ratio;
    int parallel = 0;  // <= 0: hardware concurrency capped at 8
};

// One CSV row per (grid point, metric); columns:
// algo,theta,max_iter,metric,mean,median,failures
std::string sweep(const SyntheticSpec& spec, Algo algo, const SweepGrid& grid,
                  const SweepOptions& opts = {});

inline constexpr double kMetricCapDb = 200.0;

} // namespace sep

#endif
