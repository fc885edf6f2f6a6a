#include "err/pipeline.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace err {

// ---------------------------------------------------------------------------
// Configuration

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
        throw ConfigError("config: " + key + " expects a non-negative integer, got '" + v + "'");
    }
    return out;
}

double parse_double(const std::string& key, const std::string& v) {
    double out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
        throw ConfigError("config: " + key + " expects a number, got '" + v + "'");
    }
    return out;
}

std::set<std::string> parse_toggles(const std::string& v) {
    std::set<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.insert(item);
    }
    return out;
}

struct Field {
    std::function<void(ErrConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const ErrConfig&)> get;
};

template <class T>
Field uint_field(T ErrConfig::*m) {
    return {[m](ErrConfig& c, const std::string& k, const std::string& v) { c.*m = static_cast<T>(parse_uint(k, v)); },
            [m](const ErrConfig& c) { return std::to_string(c.*m); }};
}

Field real_field(double ErrConfig::*m) {
    return {[m](ErrConfig& c, const std::string& k, const std::string& v) { c.*m = parse_double(k, v); },
            [m](const ErrConfig& c) {
                std::ostringstream os;
                os << std::setprecision(17) << c.*m;
                return os.str();
            }};
}

const std::vector<std::pair<std::string, Field>>& fields() {
    static const std::vector<std::pair<std::string, Field>> f = {
        {"channels", uint_field(&ErrConfig::channels)},
        {"blocks_zfe", uint_field(&ErrConfig::blocks_zfe)},
        {"blocks_lfr", uint_field(&ErrConfig::blocks_lfr)},
        {"blocks_hfr", uint_field(&ErrConfig::blocks_hfr)},
        {"heads", uint_field(&ErrConfig::heads)},
        {"d_state", uint_field(&ErrConfig::d_state)},
        {"kan_layers", uint_field(&ErrConfig::kan_layers)},
        {"kan_window", uint_field(&ErrConfig::kan_window)},
        {"kan_num_degree", uint_field(&ErrConfig::kan_num_degree)},
        {"kan_den_degree", uint_field(&ErrConfig::kan_den_degree)},
        {"kan_groups", uint_field(&ErrConfig::kan_groups)},
        {"k", uint_field(&ErrConfig::k)},
        {"patch", uint_field(&ErrConfig::patch)},
        {"lr", real_field(&ErrConfig::lr)},
        {"lr_min", real_field(&ErrConfig::lr_min)},
        {"weight_decay", real_field(&ErrConfig::weight_decay)},
        {"iters", uint_field(&ErrConfig::iters)},
        {"batch", uint_field(&ErrConfig::batch)},
        {"log_every", uint_field(&ErrConfig::log_every)},
        {"seed", uint_field(&ErrConfig::seed)},
        {"disable",
         {[](ErrConfig& c, const std::string&, const std::string& v) { c.disable = parse_toggles(v); },
          [](const ErrConfig& c) {
              std::string s;
              for (const auto& t : c.disable) s += (s.empty() ? "" : ",") + t;
              return s;
          }}},
    };
    return f;
}

}  // namespace

ErrConfig ErrConfig::parse(std::istream& in) {
    ErrConfig c;
    std::set<std::string> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
        }
        const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
        const auto& f = fields();
        auto it = std::find_if(f.begin(), f.end(), [&](const auto& p) { return p.first == key; });
        if (it == f.end()) throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        if (!seen.insert(key).second) throw ConfigError("config: duplicate key '" + key + "'");
        it->second.set(c, key, value);
    }
    c.validate();
    return c;
}

ErrConfig ErrConfig::parse_string(const std::string& text) {
    std::istringstream in(text);
    return parse(in);
}

ErrConfig ErrConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    return parse(in);
}

std::string ErrConfig::to_text() const {
    std::string out;
    for (const auto& [name, f] : fields()) out += name + "=" + f.get(*this) + "\n";
    return out;
}

void ErrConfig::validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("config: " + m); };
    if (channels == 0) fail("channels must be positive");
    if (heads == 0 || channels % heads != 0) fail("heads must divide channels");
    if (kan_groups == 0 || channels % kan_groups != 0) fail("kan_groups must divide channels");
    if (d_state == 0) fail("d_state must be positive");
    if (kan_window == 0) fail("kan_window must be positive");
    if (kan_num_degree == 0) fail("kan_num_degree must be at least 1");
    if (patch == 0 || patch % 8 != 0) fail("patch must be a positive multiple of 8");
    if (patch % kan_window != 0) fail("patch must be a multiple of kan_window");
    if (k < 1 || k > patch) fail("k must lie in [1, patch]");
    if (!(lr > 0) || !(lr_min >= 0) || lr_min > lr) fail("need 0 <= lr_min <= lr and lr > 0");
    if (!(weight_decay >= 0)) fail("weight_decay must be non-negative");
    if (batch == 0) fail("batch must be positive");
    if (log_every == 0) fail("log_every must be positive");
    Ablation::from_toggles(disable);
}

// ---------------------------------------------------------------------------
// Assembly

const std::vector<std::string>& ablation_toggle_names() {
    static const std::vector<std::string> names = {"L_zf", "L_lf", "L_hf", "ZFE", "LFR", "HFR", "PR"};
    return names;
}

Ablation Ablation::from_toggles(const std::set<std::string>& disabled) {
    Ablation a;
    std::map<std::string, bool*> slots = {{"L_zf", &a.l_zf}, {"L_lf", &a.l_lf}, {"L_hf", &a.l_hf}, {"ZFE", &a.zfe},
                                          {"LFR", &a.lfr},   {"HFR", &a.hfr},   {"PR", &a.pr}};
    for (const auto& t : disabled) {
        auto it = slots.find(t);
        if (it == slots.end()) throw ConfigError("unknown ablation toggle '" + t + "'");
        *it->second = false;
    }
    return a;
}

ErrModel ErrModel::init(const ErrConfig& c) {
    c.validate();
    std::mt19937_64 rng(c.seed);
    ErrModel m;
    m.config = c;
    m.zfe = zfe::ZfeParams::make(c.channels, c.blocks_zfe, c.heads, rng);
    m.lfr = lfr::LfrParams::make(c.channels, c.blocks_lfr, c.d_state, rng);
    m.hfr = hfr::HfrParams::make(c.channels, c.blocks_hfr, c.kan_layers, c.kan_groups, c.kan_window, rng,
                                 c.kan_num_degree, c.kan_den_degree);
    return m;
}

void ErrModel::visit(const nn::Visitor& fn) {
    zfe.visit("zfe", fn);
    lfr.visit("lfr", fn);
    hfr.visit("hfr", fn);
}

std::vector<std::pair<std::string, Tensor>> ErrModel::named_parameters() {
    std::vector<std::pair<std::string, Tensor>> out;
    visit([&](const std::string& n, Tensor& t) { out.emplace_back(n, t); });
    return out;
}

std::size_t ErrModel::parameter_count() {
    std::size_t n = 0;
    visit([&](const std::string&, Tensor& t) { n += t.numel(); });
    return n;
}

ErrModel ErrModel::clone() const {
    ErrModel m = *this;
    m.visit([](const std::string&, Tensor& t) {
        t = t.clone();
        t.set_requires_grad(true);
    });
    return m;
}

void check_extents(const Tensor& image) {
    if (image.rank() != 4 || image.dim(1) != 3) {
        throw ShapeError("expected an RGB batch [B,3,H,W], got " + shape_str(image.shape()));
    }
    if (image.dim(2) % 8 != 0 || image.dim(3) % 8 != 0 || image.dim(2) == 0 || image.dim(3) == 0) {
        throw ShapeError("image extents " + std::to_string(image.dim(2)) + "x" + std::to_string(image.dim(3)) +
                         " must be positive multiples of 8");
    }
}

StageBundle err_forward(const Tensor& input, const ErrModel& model, const Ablation& ab) {
    Tensor image = input.rank() == 3 ? reshape(input, {1, input.dim(0), input.dim(1), input.dim(2)}) : input;
    check_extents(image);
    StageBundle b;
    Tensor feat1, feat2;
    if (ab.zfe) {
        auto o = zfe::zfe_forward(image, model.zfe);
        b.o_s1 = o.image;
        feat1 = o.feature;
    } else {
        b.o_s1 = image;
    }
    b.feat_s1 = feat1;
    if (ab.lfr) {
        auto o = lfr::lfr_forward(image, ab.pr ? feat1 : Tensor(), ab.pr ? b.o_s1 : image, model.lfr);
        b.o_s2 = o.image;
        feat2 = o.feature;
    } else {
        b.o_s2 = b.o_s1;
    }
    b.feat_s2 = feat2;
    b.o_s3 = ab.hfr ? hfr::hfr_forward(image, ab.pr ? feat2 : Tensor(), ab.pr ? b.o_s2 : image, model.hfr) : b.o_s2;
    return b;
}

losses::LossResult err_loss(const Tensor& image, const Tensor& gt, const ErrModel& model, const Ablation& ab) {
    StageBundle b = err_forward(image, model, ab);
    Tensor g = gt.rank() == 3 ? reshape(gt, {1, gt.dim(0), gt.dim(1), gt.dim(2)}) : gt;
    return losses::total_loss(b, g, std::min(model.config.k, std::min(g.dim(2), g.dim(3))), ab.regularizers());
}

// ---------------------------------------------------------------------------
// Checkpoints: magic, u32 version, config echo, then named records.

namespace {

constexpr char kMagic[8] = {'E', 'R', 'R', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

void put_le(std::ostream& out, std::uint64_t v, int bytes) {
    char buf[8];
    for (int i = 0; i < bytes; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(buf, bytes);
}

std::uint64_t get_le(std::istream& in, int bytes) {
    unsigned char buf[8];
    if (!in.read(reinterpret_cast<char*>(buf), bytes)) throw CheckpointError("checkpoint truncated");
    std::uint64_t v = 0;
    for (int i = bytes; i-- > 0;) v = (v << 8) | buf[i];
    return v;
}

void put_string(std::ostream& out, const std::string& s) {
    put_le(out, s.size(), 4);
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in, std::size_t limit) {
    const std::uint64_t n = get_le(in, 4);
    if (n > limit) throw CheckpointError("checkpoint string length " + std::to_string(n) + " is implausible");
    std::string s(n, '\0');
    if (!in.read(s.data(), static_cast<std::streamsize>(n))) throw CheckpointError("checkpoint truncated");
    return s;
}

}  // namespace

void write_checkpoint(std::ostream& out, ErrModel& model, bool single_precision) {
    out.write(kMagic, sizeof kMagic);
    put_le(out, kVersion, 4);
    put_string(out, model.config.to_text());
    auto params = model.named_parameters();
    put_le(out, params.size(), 4);
    for (const auto& [name, t] : params) {
        put_string(out, name);
        put_le(out, t.rank(), 4);
        for (std::size_t d : t.shape()) put_le(out, d, 8);
        out.put(single_precision ? 32 : 64);
        for (double v : t.data()) {
            if (single_precision) {
                put_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)), 4);
            } else {
                put_le(out, std::bit_cast<std::uint64_t>(v), 8);
            }
        }
    }
    if (!out) throw CheckpointError("failed writing checkpoint");
}

ErrModel read_checkpoint(std::istream& in) {
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw CheckpointError("not an ERR checkpoint");
    const auto version = get_le(in, 4);
    if (version != kVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    ErrConfig config;
    try {
        config = ErrConfig::parse_string(get_string(in, 1 << 20));
    } catch (const ConfigError& e) {
        throw CheckpointError(std::string("checkpoint config: ") + e.what());
    }
    ErrModel model = ErrModel::init(config);
    std::map<std::string, Tensor> slots;
    model.visit([&](const std::string& n, Tensor& t) { slots[n] = t; });
    const auto count = get_le(in, 4);
    if (count != slots.size()) {
        throw CheckpointError("checkpoint holds " + std::to_string(count) + " tensors, model expects " +
                              std::to_string(slots.size()));
    }
    for (std::uint64_t r = 0; r < count; ++r) {
        const std::string name = get_string(in, 4096);
        auto it = slots.find(name);
        if (it == slots.end()) throw CheckpointError("checkpoint tensor '" + name + "' is not part of the model");
        Tensor& t = it->second;
        const auto rank = get_le(in, 4);
        Shape shape;
        for (std::uint64_t d = 0; d < rank && d < 8; ++d) shape.push_back(get_le(in, 8));
        if (rank > 8 || shape != t.shape()) {
            throw CheckpointError("checkpoint tensor '" + name + "' has shape " + shape_str(shape) + ", expected " +
                                  shape_str(t.shape()));
        }
        const int flag = in.get();
        if (flag != 32 && flag != 64) throw CheckpointError("checkpoint tensor '" + name + "' has bad precision flag");
        auto data = t.mutable_data();
        for (auto& v : data) {
            v = flag == 64 ? std::bit_cast<double>(get_le(in, 8))
                           : static_cast<double>(std::bit_cast<float>(static_cast<std::uint32_t>(get_le(in, 4))));
        }
        slots.erase(it);
    }
    return model;
}

void save_checkpoint(const std::string& path, ErrModel& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError("cannot write checkpoint " + path);
    write_checkpoint(out, model);
}

ErrModel load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint " + path);
    return read_checkpoint(in);
}

}  // namespace err
