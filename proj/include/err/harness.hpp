#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "err/image.hpp"
#include "err/losses.hpp"
#include "err/pipeline.hpp"
#include "err/spectral.hpp"

namespace err::harness {

/// Non-finite loss or a failed gradient check.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Frequency exchange

struct SwapReport {
    double exchanged_input_psnr = 0.0;  // degraded image carrying the GT zero frequency, vs GT
    double exchanged_gt_psnr = 0.0;     // GT carrying the degraded zero frequency, vs GT
    Tensor exchanged_input;
    Tensor exchanged_gt;
    std::vector<spectral::CurvePoint> curve;
};

SwapReport run_swap_experiment(const ImagePair& pair, const std::vector<std::size_t>& ks);
/// curve.csv, zero_exchange.csv, exchanged_input.png, exchanged_gt.png, fill_k<k>.png.
void write_swap_outputs(const std::string& dir, const ImagePair& pair, const std::vector<std::size_t>& ks,
                        const SwapReport& report);

// ---------------------------------------------------------------------------
// Training and evaluation

struct LogRow {
    std::size_t step = 0;
    double lr = 0.0;
    losses::LossReport report;
};

struct TrainOptions {
    std::string out_dir;             // empty: keep everything in memory
    std::ostream* progress = nullptr;
    bool evaluate_checkpoints = true;  // track best-by-PSNR at log steps
};

struct TrainResult {
    std::vector<LogRow> log;
    double best_psnr = 0.0;
    std::size_t best_step = 0;
    std::size_t skipped_steps = 0;
    ErrModel best;
};

/// Runs config.iters AdamW steps on random patch crops of `pairs`.
TrainResult train(ErrModel& model, const std::vector<ImagePair>& pairs, const TrainOptions& options = {});
void write_log_csv(std::ostream& out, const std::vector<LogRow>& log);

/// Runs the model on one [3, H, W] image (any extents >= 8); returns the
/// requested stage output (1, 2 or 3) clamped to [0, 1].
Tensor infer(const ErrModel& model, const Tensor& image, int stage = 3);
/// All three stage outputs for one image, clamped.
std::vector<Tensor> infer_stages(const ErrModel& model, const Tensor& image);

struct StageMetrics {
    std::string id;
    double psnr[3] = {0, 0, 0};
    double ssim[3] = {0, 0, 0};
};

struct EvalReport {
    std::vector<StageMetrics> rows;
    StageMetrics mean;
    std::string table() const;
};

EvalReport evaluate(const ErrModel& model, const std::vector<ImagePair>& pairs);

// ---------------------------------------------------------------------------
// Gradient checks

struct GradCheck {
    std::string name;
    double rel_error = 0.0;
    double tolerance = 0.0;
    bool pass() const { return rel_error < tolerance; }
};

/// Worst per-tensor norm-wise relative error between reverse-mode gradients and
/// central differences. `max_entries` of 0 probes every entry.
double finite_difference_error(const std::function<Tensor()>& loss, std::vector<Tensor> params,
                               std::size_t max_entries = 0, std::uint64_t seed = 0);

/// Primitives at 1e-5, composite blocks and the tiny end-to-end model at 1e-3.
std::vector<GradCheck> run_gradcheck_suite(std::uint64_t seed, std::ostream* progress = nullptr);

// ---------------------------------------------------------------------------
// Linear versus nonlinear toy systems

struct ToyOptions {
    std::size_t channels = 16;
    std::size_t steps = 300;
    double lr = 2e-3;
    std::uint64_t seed = 0;
    std::size_t k = 8;  // band split for the attribution
};

struct ToyComparison {
    spectral::AttributionReport report;  // a = nonlinear, b = linear
    double nonlinear_final_loss = 0.0;
    double linear_final_loss = 0.0;
};

/// Trains the same small conv net with and without activations on `train_pairs`
/// and scores both on `test_pairs` per frequency band.
ToyComparison linear_vs_nonlinear(const std::vector<ImagePair>& train_pairs, const std::vector<ImagePair>& test_pairs,
                                  const ToyOptions& options = {});

}  // namespace err::harness
