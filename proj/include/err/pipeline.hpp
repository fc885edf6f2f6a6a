#pragma once

#include <iosfwd>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "err/bundle.hpp"
#include "err/hfr.hpp"
#include "err/lfr.hpp"
#include "err/losses.hpp"
#include "err/zfe.hpp"

namespace err {

/// Raised for malformed or inconsistent configuration files.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a checkpoint cannot be read back.
class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ErrConfig {
    std::size_t channels = 16;
    std::size_t blocks_zfe = 2;
    std::size_t blocks_lfr = 2;
    std::size_t blocks_hfr = 2;
    std::size_t heads = 2;
    std::size_t d_state = 8;
    std::size_t kan_layers = 3;
    std::size_t kan_window = 8;
    std::size_t kan_num_degree = 5;
    std::size_t kan_den_degree = 4;
    std::size_t kan_groups = 8;
    std::size_t k = 8;
    std::size_t patch = 64;
    double lr = 5e-4;
    double lr_min = 1e-7;
    double weight_decay = 0.0;
    std::size_t iters = 2000;
    std::size_t batch = 1;
    std::size_t log_every = 10;
    std::uint64_t seed = 0;
    /// Ablation toggles, a subset of {L_zf, L_lf, L_hf, ZFE, LFR, HFR, PR}.
    std::set<std::string> disable;

    /// Parses `key = value` lines; '#' starts a comment. Unknown keys are rejected.
    static ErrConfig parse(std::istream& in);
    static ErrConfig parse_string(const std::string& text);
    static ErrConfig load(const std::string& path);
    void validate() const;
    std::string to_text() const;
};

/// Which components participate in a forward/loss assembly.
struct Ablation {
    bool l_zf = true, l_lf = true, l_hf = true;
    bool zfe = true, lfr = true, hfr = true;
    bool pr = true;

    static Ablation from_toggles(const std::set<std::string>& disabled);
    losses::Regularizers regularizers() const { return {l_zf, l_lf, l_hf}; }
    bool operator==(const Ablation&) const = default;
};

const std::vector<std::string>& ablation_toggle_names();

struct ErrModel {
    ErrConfig config;
    zfe::ZfeParams zfe;
    lfr::LfrParams lfr;
    hfr::HfrParams hfr;

    /// Fresh parameters drawn from config.seed.
    static ErrModel init(const ErrConfig& config);
    void visit(const nn::Visitor& fn);
    std::vector<std::pair<std::string, Tensor>> named_parameters();
    std::size_t parameter_count();
    ErrModel clone() const;
};

/// Extents must be multiples of 8; images are [B, 3, H, W] or [3, H, W].
void check_extents(const Tensor& image);

StageBundle err_forward(const Tensor& image, const ErrModel& model, const Ablation& ablation = {});

/// Forward plus the stage losses of the given assembly.
losses::LossResult err_loss(const Tensor& image, const Tensor& gt, const ErrModel& model,
                            const Ablation& ablation = {});

void save_checkpoint(const std::string& path, ErrModel& model);
ErrModel load_checkpoint(const std::string& path);
void write_checkpoint(std::ostream& out, ErrModel& model, bool single_precision = false);
ErrModel read_checkpoint(std::istream& in);

}  // namespace err
