#include "sdiff/config.hpp"
#include "sdiff/diffusion.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace sdiff {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    size_t b = s.find_last_not_of(" \t\r");
    if (a == std::string::npos) return "";
    return s.substr(a, b - a + 1);
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct Field {
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

template <typename T>
T parse_num(const std::string& key, const std::string& v);

template <>
long parse_num<long>(const std::string& key, const std::string& v) {
    size_t pos = 0;
    long x = 0;
    try {
        x = std::stol(v, &pos);
    } catch (...) {
        throw ConfigError("config key '" + key + "': '" + v + "' is not an integer");
    }
    if (pos != v.size()) throw ConfigError("config key '" + key + "': trailing junk in '" + v + "'");
    return x;
}

template <>
int parse_num<int>(const std::string& key, const std::string& v) {
    return int(parse_num<long>(key, v));
}

template <>
double parse_num<double>(const std::string& key, const std::string& v) {
    size_t pos = 0;
    double x = 0;
    try {
        x = std::stod(v, &pos);
    } catch (...) {
        throw ConfigError("config key '" + key + "': '" + v + "' is not a number");
    }
    if (pos != v.size()) throw ConfigError("config key '" + key + "': trailing junk in '" + v + "'");
    return x;
}

template <>
uint64_t parse_num<uint64_t>(const std::string& key, const std::string& v) {
    size_t pos = 0;
    unsigned long long x = 0;
    try {
        x = std::stoull(v, &pos);
    } catch (...) {
        throw ConfigError("config key '" + key + "': '" + v + "' is not an unsigned integer");
    }
    if (pos != v.size()) throw ConfigError("config key '" + key + "': trailing junk in '" + v + "'");
    return x;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config key '" + key + "': '" + v + "' is not a boolean");
}

const std::map<std::string, Field>& fields() {
    static const std::map<std::string, Field> table = [] {
        std::map<std::string, Field> f;
        auto num = [&f](const std::string& key, auto RunConfig::* member) {
            using T = std::remove_reference_t<decltype(std::declval<RunConfig>().*member)>;
            f[key] = Field{
                [key, member](RunConfig& c, const std::string& v) {
                    c.*member = parse_num<T>(key, v);
                },
                [member](const RunConfig& c) {
                    if constexpr (std::is_same_v<T, double>) return fmt_double(c.*member);
                    else return std::to_string(c.*member);
                }};
        };
        auto boolean = [&f](const std::string& key, bool RunConfig::* member) {
            f[key] = Field{[key, member](RunConfig& c, const std::string& v) {
                               c.*member = parse_bool(key, v);
                           },
                           [member](const RunConfig& c) {
                               return std::string(c.*member ? "true" : "false");
                           }};
        };
        auto str = [&f](const std::string& key, std::string RunConfig::* member) {
            f[key] = Field{[member](RunConfig& c, const std::string& v) { c.*member = v; },
                           [member](const RunConfig& c) { return c.*member; }};
        };

        num("seed", &RunConfig::seed);
        num("data.height", &RunConfig::data_height);
        num("data.width", &RunConfig::data_width);
        num("data.channels", &RunConfig::data_channels);
        num("data.n_min", &RunConfig::data_n_min);
        num("data.n_max", &RunConfig::data_n_max);
        num("data.tail", &RunConfig::data_tail);
        num("data.count", &RunConfig::data_count);
        num("data.holdout", &RunConfig::data_holdout);
        num("model.width", &RunConfig::model_width);
        num("model.gamma", &RunConfig::model_gamma);
        num("model.conv_window", &RunConfig::model_conv_window);
        num("model.heads", &RunConfig::model_heads);
        num("model.blocks", &RunConfig::model_blocks);
        boolean("model.pos_emb", &RunConfig::model_pos_emb);
        str("model.temporal", &RunConfig::model_temporal);
        num("diffusion.t_max", &RunConfig::diff_t_max);
        num("diffusion.beta_min", &RunConfig::diff_beta_min);
        num("diffusion.beta_max", &RunConfig::diff_beta_max);
        num("diffusion.ddim_steps", &RunConfig::diff_ddim_steps);
        str("curriculum.strategy", &RunConfig::curr_strategy);
        num("curriculum.lambda", &RunConfig::curr_lambda);
        num("curriculum.kp", &RunConfig::curr_kp);
        num("curriculum.ki", &RunConfig::curr_ki);
        num("curriculum.kd", &RunConfig::curr_kd);
        num("curriculum.delta_scale", &RunConfig::curr_delta_scale);
        num("curriculum.h_ipt", &RunConfig::curr_h_ipt);
        num("curriculum.h_pdt", &RunConfig::curr_h_pdt);
        num("curriculum.h_grt", &RunConfig::curr_h_grt);
        num("train.steps", &RunConfig::train_steps);
        num("train.lr", &RunConfig::train_lr);
        num("train.checkpoint_every", &RunConfig::train_checkpoint_every);
        num("train.text_augment", &RunConfig::train_text_augment);
        num("eval.clips", &RunConfig::eval_clips);
        num("eval.feature_dim", &RunConfig::eval_feature_dim);
        num("eval.window", &RunConfig::eval_window);
        num("eval.battery_per_task", &RunConfig::eval_battery_per_task);
        num("sample.frames", &RunConfig::sample_frames);
        return f;
    }();
    return table;
}

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
    RunConfig cfg;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        auto it = fields().find(key);
        if (it == fields().end())
            throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key +
                              "'");
        it->second.set(cfg, value);
    }
    validate(cfg);
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

void validate(const RunConfig& cfg) {
    try {
        sdiff::validate(cfg.gen_config());
        cfg.denoiser_config().validate();
        if (cfg.data_count < 0) throw std::invalid_argument("data.count must be non-negative");
        if (cfg.data_holdout < 0 || cfg.data_holdout >= 1)
            throw std::invalid_argument("data.holdout must lie in [0,1)");
        if (!(cfg.curr_lambda > 0 && cfg.curr_lambda < 1))
            throw std::invalid_argument("curriculum.lambda must lie strictly inside (0,1)");
        if (cfg.curr_kp < 0 || cfg.curr_ki < 0 || cfg.curr_kd < 0)
            throw std::invalid_argument("PID gains must be non-negative");
        strategy_of(cfg.curr_strategy);
        temporal_of(cfg.model_temporal);
        if (cfg.train_steps < 1) throw std::invalid_argument("train.steps must be positive");
        if (cfg.train_lr <= 0) throw std::invalid_argument("train.lr must be positive");
        if (cfg.train_checkpoint_every < 1)
            throw std::invalid_argument("train.checkpoint_every must be positive");
        if (cfg.train_text_augment < 0 || cfg.train_text_augment > 1)
            throw std::invalid_argument("train.text_augment must lie in [0,1]");
        if (cfg.diff_ddim_steps < 1 || cfg.diff_ddim_steps > cfg.diff_t_max)
            throw std::invalid_argument("diffusion.ddim_steps must lie in [1, t_max]");
        if (cfg.eval_feature_dim < 1 || cfg.eval_feature_dim > 16)
            throw std::invalid_argument("eval.feature_dim must lie in [1,16]");
        if (cfg.eval_clips < cfg.eval_feature_dim + 1)
            throw std::invalid_argument("eval.clips must exceed eval.feature_dim");
        if (cfg.eval_window < 2) throw std::invalid_argument("eval.window must be at least 2");
        if (cfg.eval_battery_per_task < 1)
            throw std::invalid_argument("eval.battery_per_task must be positive");
        if (cfg.sample_frames < 3 || cfg.sample_frames > cfg.denoiser_config().frames_max)
            throw std::invalid_argument("sample.frames outside the model's range");
        // constructing the schedule enforces the terminal-noise invariant
        DiffusionSchedule::linear_beta(cfg.diff_t_max, cfg.diff_beta_min, cfg.diff_beta_max);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

GenConfig RunConfig::gen_config() const {
    GenConfig g;
    g.height = data_height;
    g.width = data_width;
    g.channels = data_channels;
    g.n_min = data_n_min;
    g.n_max = data_n_max;
    g.tail_exponent = data_tail;
    return g;
}

DenoiserConfig RunConfig::denoiser_config() const {
    DenoiserConfig d;
    d.frames_max = 24;
    d.height = data_height;
    d.width = data_width;
    d.channels = data_channels;
    d.d = model_width;
    d.gamma = model_gamma;
    d.conv_window = model_conv_window;
    d.heads = model_heads;
    d.blocks = model_blocks;
    d.pos_emb = model_pos_emb;
    d.temporal = temporal_of(model_temporal);
    return d;
}

CurriculumConfig RunConfig::curriculum_config() const {
    CurriculumConfig c;
    c.n_min = data_n_min;
    c.n_max = data_n_max;
    c.total_steps = std::max(1L, train_steps - 1);
    c.lambda = curr_lambda;
    c.kp = curr_kp;
    c.ki = curr_ki;
    c.kd = curr_kd;
    c.delta_scale = curr_delta_scale;
    c.h_ipt = curr_h_ipt;
    c.h_pdt = curr_h_pdt;
    c.h_grt = curr_h_grt;
    return c;
}

std::string dump_config(const RunConfig& cfg) {
    std::ostringstream os;
    for (const auto& [key, field] : fields()) os << key << " = " << field.get(cfg) << "\n";
    return os.str();
}

uint64_t config_hash(const RunConfig& cfg) { return fnv1a(dump_config(cfg)); }

}  // namespace sdiff
