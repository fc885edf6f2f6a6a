#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "err/harness.hpp"
#include "err/imageio.hpp"
#include "err/synth.hpp"

namespace fs = std::filesystem;
using namespace err;

namespace {

enum Exit : int { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

int swap_experiment(const std::string& input, const std::string& gt, const std::vector<std::size_t>& ks,
                    const std::string& out) {
    ImagePair pair{io::load_image(input), io::load_image(gt), fs::path(input).stem().string()};
    if (pair.degraded.shape() != pair.gt.shape()) throw io::DataError("input and gt extents differ");
    const std::size_t limit = std::max(pair.gt.dim(1), pair.gt.dim(2));
    for (std::size_t k : ks) {
        if (k > limit) throw std::invalid_argument("--ks entry " + std::to_string(k) + " exceeds image extent");
    }
    harness::SwapReport r = harness::run_swap_experiment(pair, ks);
    harness::write_swap_outputs(out, pair, ks, r);
    std::cout << "zero-frequency exchange: exchanged_input " << r.exchanged_input_psnr << " dB, exchanged_gt "
              << r.exchanged_gt_psnr << " dB\n";
    spectral::write_curve_csv(std::cout, r.curve);
    return kOk;
}

int train(const std::string& config_path, const std::string& data, const std::string& out) {
    ErrConfig config = ErrConfig::load(config_path);
    auto pairs = io::load_pairs(data);
    ErrModel model = ErrModel::init(config);
    std::cout << "parameters: " << model.parameter_count() << '\n';
    harness::TrainOptions opts;
    opts.out_dir = out;
    opts.progress = &std::cout;
    harness::TrainResult r = harness::train(model, pairs, opts);
    std::cout << "best PSNR(O_s3) " << r.best_psnr << " dB at step " << r.best_step << "; skipped steps "
              << r.skipped_steps << '\n';
    return kOk;
}

int infer(const std::string& ckpt, const std::string& input, const std::string& output, int stage) {
    ErrModel model = load_checkpoint(ckpt);
    io::save_image(output, harness::infer(model, io::load_image(input), stage));
    return kOk;
}

int eval(const std::string& ckpt, const std::string& data) {
    ErrModel model = load_checkpoint(ckpt);
    std::cout << harness::evaluate(model, io::load_pairs(data)).table();
    return kOk;
}

int gradcheck(std::uint64_t seed) {
    auto results = harness::run_gradcheck_suite(seed, &std::cout);
    std::size_t failed = 0;
    for (const auto& c : results) failed += c.pass() ? 0 : 1;
    std::cout << (results.size() - failed) << "/" << results.size() << " checks passed\n";
    return failed == 0 ? kOk : kNumerical;
}

int synthesize(const std::string& gt_dir, const std::string& kind_name, std::uint64_t seed, const std::string& out) {
    const synth::Kind kind = synth::parse_kind(kind_name);
    if (!fs::is_directory(gt_dir)) throw io::DataError("not a directory: " + gt_dir);
    const auto files = io::list_images(gt_dir);
    if (files.empty()) throw io::DataError("no images in " + gt_dir);
    fs::create_directories(fs::path(out) / "input");
    fs::create_directories(fs::path(out) / "gt");
    for (std::size_t i = 0; i < files.size(); ++i) {
        const std::string name = fs::path(files[i]).stem().string() + ".png";
        ImagePair p = synth::degrade(io::load_image(files[i]), kind, seed + i, name);
        io::save_image((fs::path(out) / "input" / name).string(), p.degraded);
        io::save_image((fs::path(out) / "gt" / name).string(), p.gt);
    }
    std::cout << "wrote " << files.size() << " " << synth::kind_name(kind) << " pairs to " << out << '\n';
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ERR spectral restoration toolkit"};
    app.require_subcommand(1);

    std::string input, gt, out, config, data, checkpoint, output, gt_dir, kind;
    std::vector<std::size_t> ks{0, 1, 2, 4, 8, 16, 32};
    int stage = 3;
    std::uint64_t seed = 0;

    auto* swap = app.add_subcommand("swap-experiment", "zero-frequency exchange and progressive low-band fill");
    swap->add_option("--input", input, "degraded image")->required();
    swap->add_option("--gt", gt, "ground truth image")->required();
    swap->add_option("--ks", ks, "cutoffs for the fill curve")->delimiter(',');
    swap->add_option("--out", out, "output directory")->required();

    auto* tr = app.add_subcommand("train", "train a model");
    tr->add_option("--config", config, "key=value config file")->required();
    tr->add_option("--data", data, "directory with input/ and gt/")->required();
    tr->add_option("--out", out, "output directory")->required();

    auto* inf = app.add_subcommand("infer", "restore one image");
    inf->add_option("--checkpoint", checkpoint)->required();
    inf->add_option("--input", input)->required();
    inf->add_option("--output", output)->required();
    inf->add_option("--stage", stage, "stage output to write")->check(CLI::IsMember({1, 2, 3}));

    auto* ev = app.add_subcommand("eval", "per-image and mean PSNR/SSIM for each stage");
    ev->add_option("--checkpoint", checkpoint)->required();
    ev->add_option("--data", data)->required();

    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    gc->add_option("--seed", seed);

    auto* sy = app.add_subcommand("synth", "synthesize degraded pairs");
    sy->add_option("--gt-dir", gt_dir)->required();
    sy->add_option("--kind", kind)->required()->check(CLI::IsMember({"lowlight", "rain", "blur", "haze"}));
    sy->add_option("--seed", seed)->required();
    sy->add_option("--out", out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    try {
        if (*swap) return swap_experiment(input, gt, ks, out);
        if (*tr) return train(config, data, out);
        if (*inf) return infer(checkpoint, input, output, stage);
        if (*ev) return eval(checkpoint, data);
        if (*gc) return gradcheck(seed);
        if (*sy) return synthesize(gt_dir, kind, seed, out);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kUsage;
    } catch (const ShapeError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kUsage;
    } catch (const harness::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kNumerical;
    } catch (const io::DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const CheckpointError& e) {
        std::cerr << "checkpoint error: " << e.what() << '\n';
        return kData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kData;
    }
    return kUsage;
}
