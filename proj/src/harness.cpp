#include "err/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "err/imageio.hpp"
#include "err/metrics.hpp"
#include "err/optim.hpp"

namespace err::harness {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Frequency exchange

SwapReport run_swap_experiment(const ImagePair& pair, const std::vector<std::size_t>& ks) {
    if (pair.degraded.shape() != pair.gt.shape()) {
        throw ShapeError("swap experiment: input " + shape_str(pair.degraded.shape()) + " vs gt " +
                         shape_str(pair.gt.shape()));
    }
    NoGradGuard ng;
    SwapReport r;
    auto [ei, eg] = spectral::exchange_band(pair.degraded, pair.gt, spectral::Band::Zero, 1);
    r.exchanged_input = ei;
    r.exchanged_gt = eg;
    r.exchanged_input_psnr = psnr(ei, pair.gt);
    r.exchanged_gt_psnr = psnr(eg, pair.gt);
    r.curve = spectral::progressive_fill_curve(pair.degraded, pair.gt, ks);
    return r;
}

void write_swap_outputs(const std::string& dir, const ImagePair& pair, const std::vector<std::size_t>& ks,
                        const SwapReport& r) {
    fs::create_directories(dir);
    {
        std::ofstream out(fs::path(dir) / "curve.csv");
        spectral::write_curve_csv(out, r.curve);
    }
    {
        std::ofstream out(fs::path(dir) / "zero_exchange.csv");
        out << std::setprecision(10) << "image,psnr\nexchanged_input," << r.exchanged_input_psnr
            << "\nexchanged_gt," << r.exchanged_gt_psnr << '\n';
    }
    io::save_image((fs::path(dir) / "exchanged_input.png").string(), r.exchanged_input);
    io::save_image((fs::path(dir) / "exchanged_gt.png").string(), r.exchanged_gt);
    NoGradGuard ng;
    for (std::size_t k : ks) {
        io::save_image((fs::path(dir) / ("fill_k" + std::to_string(k) + ".png")).string(),
                       spectral::fill_low_frequencies(pair.degraded, pair.gt, k));
    }
}

// ---------------------------------------------------------------------------
// Inference and evaluation

namespace {

Tensor clamp01(const Tensor& t) {
    std::vector<double> v(t.vec());
    for (auto& x : v) x = std::clamp(x, 0.0, 1.0);
    return Tensor(t.shape(), std::move(v));
}

Tensor crop_chw(const Tensor& img, std::size_t y, std::size_t x, std::size_t h, std::size_t w) {
    const std::size_t C = img.dim(0), W = img.dim(2);
    std::vector<double> v(C * h * w);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j) v[(c * h + i) * w + j] = img[(c * img.dim(1) + y + i) * W + x + j];
    return Tensor(Shape{C, h, w}, std::move(v));
}

}  // namespace

std::vector<Tensor> infer_stages(const ErrModel& model, const Tensor& image) {
    if (image.rank() != 3 || image.dim(0) != 3) throw ShapeError("infer expects [3,H,W], got " + shape_str(image.shape()));
    const std::size_t H = image.dim(1), W = image.dim(2);
    if (H < 8 || W < 8) throw ShapeError("infer: image must be at least 8x8");
    NoGradGuard ng;
    const std::size_t ph = (8 - H % 8) % 8, pw = (8 - W % 8) % 8;
    Tensor x = as_batch(image);
    if (ph || pw) x = reflect_pad(x, ph, pw);
    StageBundle b = err_forward(x, model, Ablation::from_toggles(model.config.disable));
    std::vector<Tensor> out;
    for (const Tensor* t : {&b.o_s1, &b.o_s2, &b.o_s3}) {
        Tensor o = (ph || pw) ? crop(*t, H, W) : *t;
        out.push_back(clamp01(batch_item(o, 0)));
    }
    return out;
}

Tensor infer(const ErrModel& model, const Tensor& image, int stage) {
    if (stage < 1 || stage > 3) throw std::invalid_argument("stage must be 1, 2 or 3");
    return infer_stages(model, image)[static_cast<std::size_t>(stage - 1)];
}

EvalReport evaluate(const ErrModel& model, const std::vector<ImagePair>& pairs) {
    if (pairs.empty()) throw io::DataError("evaluate: no image pairs");
    EvalReport r;
    r.mean.id = "mean";
    for (const auto& p : pairs) {
        auto stages = infer_stages(model, p.degraded);
        StageMetrics m;
        m.id = p.id;
        for (std::size_t s = 0; s < 3; ++s) {
            m.psnr[s] = psnr(stages[s], p.gt);
            m.ssim[s] = ssim(stages[s], p.gt);
            r.mean.psnr[s] += m.psnr[s] / static_cast<double>(pairs.size());
            r.mean.ssim[s] += m.ssim[s] / static_cast<double>(pairs.size());
        }
        r.rows.push_back(m);
    }
    return r;
}

std::string EvalReport::table() const {
    std::ostringstream os;
    os << std::left << std::setw(20) << "image" << std::right;
    for (int s = 1; s <= 3; ++s) os << std::setw(10) << ("PSNR_s" + std::to_string(s)) << std::setw(10) << ("SSIM_s" + std::to_string(s));
    os << '\n';
    auto row = [&](const StageMetrics& m) {
        os << std::left << std::setw(20) << m.id << std::right << std::fixed;
        for (int s = 0; s < 3; ++s) os << std::setw(10) << std::setprecision(2) << m.psnr[s] << std::setw(10) << std::setprecision(4) << m.ssim[s];
        os << '\n';
    };
    for (const auto& m : rows) row(m);
    row(mean);
    return os.str();
}

// ---------------------------------------------------------------------------
// Training

void write_log_csv(std::ostream& out, const std::vector<LogRow>& log) {
    losses::write_report_header(out);
    for (const auto& r : log) losses::write_report_row(out, r.step, r.lr, r.report);
}

TrainResult train(ErrModel& model, const std::vector<ImagePair>& pairs, const TrainOptions& options) {
    if (pairs.empty()) throw io::DataError("train: no image pairs");
    const ErrConfig& c = model.config;
    const Ablation ablation = Ablation::from_toggles(c.disable);
    for (const auto& p : pairs) {
        if (p.gt.dim(1) < 8 || p.gt.dim(2) < 8) throw io::DataError("train: image " + p.id + " is smaller than 8x8");
    }

    std::vector<Tensor> params;
    model.visit([&](const std::string&, Tensor& t) { params.push_back(t); });
    optim::AdamW opt(params, {0.9, 0.999, 1e-8, c.weight_decay});
    const optim::CosineSchedule schedule{c.lr, c.lr_min, c.iters};
    std::mt19937_64 rng(c.seed ^ 0x9e3779b97f4a7c15ULL);

    std::ofstream log_file;
    if (!options.out_dir.empty()) {
        fs::create_directories(options.out_dir);
        log_file.open(fs::path(options.out_dir) / "train_log.csv");
        losses::write_report_header(log_file);
    }

    TrainResult result;
    result.best_psnr = -1.0;
    auto consider = [&](std::size_t step) {
        if (!options.evaluate_checkpoints) return;
        const double p = evaluate(model, pairs).mean.psnr[2];
        if (p > result.best_psnr) {
            result.best_psnr = p;
            result.best_step = step;
            result.best = model.clone();
            if (!options.out_dir.empty()) save_checkpoint((fs::path(options.out_dir) / "best.ckpt").string(), model);
        }
    };

    std::uniform_int_distribution<std::size_t> pick(0, pairs.size() - 1);
    for (std::size_t step = 0; step < c.iters; ++step) {
        std::vector<std::size_t> chosen(c.batch);
        for (auto& i : chosen) i = pick(rng);
        std::size_t ch = c.patch, cw = c.patch;
        for (std::size_t i : chosen) {
            ch = std::min(ch, pairs[i].gt.dim(1) / 8 * 8);
            cw = std::min(cw, pairs[i].gt.dim(2) / 8 * 8);
        }
        std::vector<Tensor> xs, ys;
        for (std::size_t i : chosen) {
            const auto& p = pairs[i];
            std::uniform_int_distribution<std::size_t> oy(0, p.gt.dim(1) - ch), ox(0, p.gt.dim(2) - cw);
            const std::size_t y = oy(rng), x = ox(rng);
            xs.push_back(crop_chw(p.degraded, y, x, ch, cw));
            ys.push_back(crop_chw(p.gt, y, x, ch, cw));
        }
        Tensor xb = stack_images(xs), yb = stack_images(ys);

        opt.zero_grad();
        losses::LossResult r = err_loss(xb, yb, model, ablation);
        if (!std::isfinite(r.report.total)) {
            Tape::current().clear();
            throw NumericalError("non-finite loss at step " + std::to_string(step));
        }
        const double lr = schedule.at(step);
        const bool logged = step % c.log_every == 0 || step + 1 == c.iters;
        if (logged) {
            result.log.push_back({step, lr, r.report});
            if (log_file.is_open()) losses::write_report_row(log_file, step, lr, r.report);
            if (options.progress) {
                *options.progress << "step " << step << " lr " << lr << " total " << r.report.total << '\n';
            }
        }
        backward(r.total);
        if (logged) {
            NoGradGuard ng;
            consider(step);
        }
        opt.step(lr);
    }
    consider(c.iters);
    if (result.best_psnr < 0.0) result.best = model.clone();
    result.skipped_steps = opt.skipped();
    if (!options.out_dir.empty()) {
        save_checkpoint((fs::path(options.out_dir) / "final.ckpt").string(), model);
        if (!options.evaluate_checkpoints) save_checkpoint((fs::path(options.out_dir) / "best.ckpt").string(), model);
    }
    return result;
}

}  // namespace err::harness
