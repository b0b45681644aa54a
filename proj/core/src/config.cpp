#include "calad/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "calad/errors.hpp"
#include "calad/prng.hpp"

namespace calad {

RunConfig default_config() { return RunConfig{}; }

namespace {

struct TomlValue {
    enum class Kind { number, boolean, string, array };
    Kind kind = Kind::number;
    double num = 0.0;
    bool b = false;
    std::string s;
    std::vector<TomlValue> arr;
};

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

TomlValue parse_value(const std::string& raw, const std::string& where);

TomlValue parse_array(const std::string& raw, const std::string& where) {
    TomlValue v;
    v.kind = TomlValue::Kind::array;
    std::string inner = trim(raw.substr(1, raw.size() - 2));
    if (inner.empty()) return v;
    // Split on top-level commas.
    int depth = 0;
    std::string cur;
    std::vector<std::string> parts;
    for (char c : inner) {
        if (c == '[') ++depth;
        if (c == ']') --depth;
        if (c == ',' && depth == 0) {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    parts.push_back(cur);
    for (const auto& p : parts) v.arr.push_back(parse_value(trim(p), where));
    return v;
}

TomlValue parse_value(const std::string& raw, const std::string& where) {
    if (raw.empty()) throw ConfigError(where + ": empty value");
    if (raw.front() == '[') {
        if (raw.back() != ']') throw ConfigError(where + ": unterminated array");
        return parse_array(raw, where);
    }
    if (raw.front() == '"') {
        if (raw.size() < 2 || raw.back() != '"') {
            throw ConfigError(where + ": unterminated string");
        }
        TomlValue v;
        v.kind = TomlValue::Kind::string;
        v.s = raw.substr(1, raw.size() - 2);
        return v;
    }
    if (raw == "true" || raw == "false") {
        TomlValue v;
        v.kind = TomlValue::Kind::boolean;
        v.b = raw == "true";
        return v;
    }
    TomlValue v;
    v.kind = TomlValue::Kind::number;
    try {
        std::size_t used = 0;
        v.num = std::stod(raw, &used);
        if (used != raw.size()) throw std::invalid_argument(raw);
    } catch (const std::exception&) {
        throw ConfigError(where + ": cannot parse value '" + raw + "'");
    }
    return v;
}

double need_number(const TomlValue& v, const std::string& where) {
    if (v.kind != TomlValue::Kind::number) throw ConfigError(where + ": expected a number");
    return v.num;
}

std::size_t need_count(const TomlValue& v, const std::string& where) {
    double d = need_number(v, where);
    if (d < 0 || d != std::floor(d)) throw ConfigError(where + ": expected a non-negative integer");
    return static_cast<std::size_t>(d);
}

std::uint64_t need_u64(const TomlValue& v, const std::string& where) {
    double d = need_number(v, where);
    if (d < 0 || d != std::floor(d)) throw ConfigError(where + ": expected a non-negative integer");
    return static_cast<std::uint64_t>(d);
}

bool need_bool(const TomlValue& v, const std::string& where) {
    if (v.kind != TomlValue::Kind::boolean) throw ConfigError(where + ": expected true/false");
    return v.b;
}

std::string need_string(const TomlValue& v, const std::string& where) {
    if (v.kind != TomlValue::Kind::string) throw ConfigError(where + ": expected a string");
    return v.s;
}

std::vector<std::size_t> need_count_array(const TomlValue& v, const std::string& where) {
    if (v.kind != TomlValue::Kind::array) throw ConfigError(where + ": expected an array");
    std::vector<std::size_t> out;
    for (const auto& e : v.arr) out.push_back(need_count(e, where));
    return out;
}

}  // namespace

void apply_toml_line(RunConfig& cfg, const std::string& section, const std::string& key,
                     const std::string& raw_value, const std::string& where) {
    TomlValue v = parse_value(raw_value, where);
    auto unknown = [&]() -> void {
        throw ConfigError(where + ": unknown key '" +
                          (section.empty() ? key : section + "." + key) + "'");
    };

    if (section.empty()) {
        if (key == "seed") cfg.seed = need_u64(v, where);
        else if (key == "ws") cfg.ws = need_count(v, where);
        else if (key == "stride") cfg.stride = need_count(v, where);
        else if (key == "lambda") cfg.lambda = need_number(v, where);
        else if (key == "desk") cfg.desk = need_bool(v, where);
        else unknown();
    } else if (section == "data") {
        if (key == "train") cfg.data.train = need_string(v, where);
        else if (key == "test") cfg.data.test = need_string(v, where);
        else if (key == "labels") cfg.data.labels = need_string(v, where);
        else if (key == "corpus") cfg.data.corpus = need_string(v, where);
        else unknown();
    } else if (section == "synth") {
        if (key == "t_train") cfg.synth.t_train = need_count(v, where);
        else if (key == "t_test") cfg.synth.t_test = need_count(v, where);
        else if (key == "channels") cfg.synth.channels = need_count(v, where);
        else if (key == "relevant") cfg.synth.relevant = need_count_array(v, where);
        else if (key == "shift") cfg.synth.shift = need_bool(v, where);
        else if (key == "segments") {
            if (v.kind != TomlValue::Kind::array) throw ConfigError(where + ": expected an array");
            cfg.synth.anomaly_segments.clear();
            for (const auto& seg : v.arr) {
                if (seg.kind != TomlValue::Kind::array || seg.arr.size() != 2) {
                    throw ConfigError(where + ": each segment must be [begin, end]");
                }
                cfg.synth.anomaly_segments.emplace_back(need_count(seg.arr[0], where),
                                                        need_count(seg.arr[1], where));
            }
        } else unknown();
    } else if (section == "ae") {
        if (key == "d_model") cfg.ae.d_model = need_count(v, where);
        else if (key == "blocks") cfg.ae.n_blocks = need_count(v, where);
        else if (key == "heads") cfg.ae.heads = need_count(v, where);
        else if (key == "ff_hidden") cfg.ae.ff_hidden = need_count(v, where);
        else if (key == "epochs") cfg.ae.epochs = need_count(v, where);
        else if (key == "batch") cfg.ae.batch = need_count(v, where);
        else if (key == "lr") cfg.ae.lr = need_number(v, where);
        else unknown();
    } else if (section == "augment") {
        if (key == "bin_fraction") cfg.augment.bin_fraction = need_number(v, where);
        else if (key == "amp_sigma") cfg.augment.amp_sigma = need_number(v, where);
        else if (key == "phase_max") cfg.augment.phase_max = need_number(v, where);
        else if (key == "mode") {
            std::string m = need_string(v, where);
            if (m == "channel_wise" || m == "channel-wise") {
                cfg.augment.mode = AugmentMode::channel_wise;
            } else if (m == "all_channel" || m == "all-channel") {
                cfg.augment.mode = AugmentMode::all_channel;
            } else {
                throw ConfigError(where + ": mode must be channel_wise or all_channel");
            }
        } else unknown();
    } else if (section == "encoder") {
        if (key == "conv_channels") cfg.encoder.conv_channels = need_count_array(v, where);
        else if (key == "kernel") cfg.encoder.kernel = need_count(v, where);
        else if (key == "embed_dim") cfg.encoder.embed_dim = need_count(v, where);
        else if (key == "epochs") cfg.encoder.epochs = need_count(v, where);
        else if (key == "batch") cfg.encoder.batch = need_count(v, where);
        else if (key == "lr") cfg.encoder.lr = need_number(v, where);
        else if (key == "margin") cfg.encoder.margin = need_number(v, where);
        else unknown();
    } else if (section == "main") {
        if (key == "d_model") cfg.main.d_model = need_count(v, where);
        else if (key == "blocks") cfg.main.n_blocks = need_count(v, where);
        else if (key == "heads") cfg.main.heads = need_count(v, where);
        else if (key == "ff_hidden") cfg.main.ff_hidden = need_count(v, where);
        else if (key == "classes") cfg.main.n_classes = need_count(v, where);
        else if (key == "mlp_hidden") cfg.main.mlp_hidden = need_count(v, where);
        else if (key == "epochs") cfg.main.epochs = need_count(v, where);
        else if (key == "batch") cfg.main.batch = need_count(v, where);
        else if (key == "lr") cfg.main.lr = need_number(v, where);
        else if (key == "literal_eq9_sign") cfg.main.literal_eq9_sign = need_bool(v, where);
        else unknown();
    } else {
        throw ConfigError(where + ": unknown section [" + section + "]");
    }
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open config file");
    RunConfig cfg = default_config();
    std::string line;
    std::string section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string where = path + ":" + std::to_string(line_no);
        // Strip comments outside strings.
        bool in_string = false;
        std::string stripped;
        for (char c : line) {
            if (c == '"') in_string = !in_string;
            if (c == '#' && !in_string) break;
            stripped += c;
        }
        stripped = trim(stripped);
        if (stripped.empty()) continue;
        if (stripped.front() == '[') {
            if (stripped.back() != ']') throw ConfigError(where + ": unterminated section");
            section = trim(stripped.substr(1, stripped.size() - 2));
            continue;
        }
        std::size_t eq = stripped.find('=');
        if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
        std::string key = trim(stripped.substr(0, eq));
        std::string value = trim(stripped.substr(eq + 1));
        apply_toml_line(cfg, section, key, value, where);
    }
    validate_config(cfg);
    return cfg;
}

void apply_desk_profile(RunConfig& cfg) {
    cfg.desk = true;
    cfg.ws = 64;
    cfg.stride = 5;
    cfg.ae.epochs = 10;
    cfg.encoder.epochs = 10;
    cfg.main.epochs = 15;
    cfg.ae.d_model = 32;
    cfg.ae.ff_hidden = 64;
    cfg.main.d_model = 32;
    cfg.main.ff_hidden = 64;
    cfg.main.mlp_hidden = 128;
    cfg.encoder.conv_channels = {16, 32, 64};
    cfg.encoder.embed_dim = 64;
}

void validate_config(const RunConfig& cfg) {
    if (cfg.ws < 2) throw ConfigError("ws must be >= 2");
    if (cfg.stride < 1) throw ConfigError("stride must be >= 1");
    if (cfg.lambda < 0.0) throw ConfigError("lambda must be >= 0");
    if (cfg.ae.batch < 1 || cfg.encoder.batch < 1 || cfg.main.batch < 1) {
        throw ConfigError("batch sizes must be >= 1");
    }
    if (cfg.main.n_classes < 2) throw ConfigError("main.classes must be >= 2");
    if (cfg.ae.d_model % cfg.ae.heads != 0) throw ConfigError("ae.d_model must divide by heads");
    if (cfg.main.d_model % cfg.main.heads != 0) {
        throw ConfigError("main.d_model must divide by heads");
    }
    if (cfg.encoder.kernel % 2 == 0) throw ConfigError("encoder.kernel must be odd");
    cfg.augment.validate();
}

const char* stage_name(Stage s) {
    switch (s) {
        case Stage::synth: return "synth";
        case Stage::relevance: return "relevance";
        case Stage::augment: return "augment";
        case Stage::train_embed: return "train-embed";
        case Stage::train: return "train";
        case Stage::detect: return "detect";
    }
    return "?";
}

namespace {

std::string num(double v) { return json_double(v); }

std::string data_string(const RunConfig& cfg) {
    std::ostringstream os;
    if (cfg.use_synth()) {
        os << "synth;t_train=" << cfg.synth.t_train << ";t_test=" << cfg.synth.t_test
           << ";channels=" << cfg.synth.channels << ";relevant=";
        for (std::size_t c : cfg.synth.relevant) os << c << ",";
        os << ";segments=";
        for (const auto& s : cfg.synth.anomaly_segments) os << s.first << "-" << s.second << ",";
        os << ";shift=" << (cfg.synth.shift ? 1 : 0);
    } else {
        os << "csv;train=" << cfg.data.train << ";test=" << cfg.data.test
           << ";labels=" << cfg.data.labels << ";corpus=" << cfg.data.corpus;
    }
    return os.str();
}

}  // namespace

std::string stage_config_string(const RunConfig& cfg, Stage s) {
    std::ostringstream os;
    os << "seed=" << cfg.seed << ";" << data_string(cfg);
    if (s == Stage::synth) return os.str();

    os << ";ws=" << cfg.ws << ";stride=" << cfg.stride << ";lambda=" << num(cfg.lambda)
       << ";ae=" << cfg.ae.d_model << "," << cfg.ae.n_blocks << "," << cfg.ae.heads << ","
       << cfg.ae.ff_hidden << "," << cfg.ae.epochs << "," << cfg.ae.batch << ","
       << num(cfg.ae.lr);
    if (s == Stage::relevance) return os.str();

    os << ";aug=" << num(cfg.augment.bin_fraction) << "," << num(cfg.augment.amp_sigma) << ","
       << num(cfg.augment.phase_max) << ","
       << (cfg.augment.mode == AugmentMode::channel_wise ? "cw" : "ac");
    if (s == Stage::augment) return os.str();

    os << ";enc=";
    for (std::size_t c : cfg.encoder.conv_channels) os << c << "-";
    os << "," << cfg.encoder.kernel << "," << cfg.encoder.embed_dim << ","
       << cfg.encoder.epochs << "," << cfg.encoder.batch << "," << num(cfg.encoder.lr) << ","
       << num(cfg.encoder.margin);
    if (s == Stage::train_embed) return os.str();

    os << ";main=" << cfg.main.d_model << "," << cfg.main.n_blocks << "," << cfg.main.heads
       << "," << cfg.main.ff_hidden << "," << cfg.main.n_classes << "," << cfg.main.mlp_hidden
       << "," << cfg.main.epochs << "," << cfg.main.batch << "," << num(cfg.main.lr) << ","
       << (cfg.main.literal_eq9_sign ? 1 : 0);
    return os.str();  // train and detect share the full string
}

std::string stage_hash_hex(const RunConfig& cfg, Stage s) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(hash_str(stage_config_string(cfg, s))));
    return buf;
}

void write_config_echo(JsonWriter& w, const RunConfig& cfg) {
    w.begin_object();
    w.key("seed").value(cfg.seed);
    w.key("ws").value(cfg.ws);
    w.key("stride").value(cfg.stride);
    w.key("lambda").value(cfg.lambda);
    w.key("desk").value(cfg.desk);
    w.key("data");
    w.begin_object();
    w.key("train").value(cfg.data.train);
    w.key("test").value(cfg.data.test);
    w.key("labels").value(cfg.data.labels);
    w.key("corpus").value(cfg.data.corpus);
    w.end_object();
    w.key("synth");
    w.begin_object();
    w.key("t_train").value(cfg.synth.t_train);
    w.key("t_test").value(cfg.synth.t_test);
    w.key("channels").value(cfg.synth.channels);
    w.key("relevant");
    w.begin_array();
    for (std::size_t c : cfg.synth.relevant) w.value(c);
    w.end_array();
    w.key("segments");
    w.begin_array();
    for (const auto& s : cfg.synth.anomaly_segments) {
        w.begin_array();
        w.value(s.first);
        w.value(s.second);
        w.end_array();
    }
    w.end_array();
    w.key("shift").value(cfg.synth.shift);
    w.end_object();
    w.key("ae");
    w.begin_object();
    w.key("d_model").value(cfg.ae.d_model);
    w.key("blocks").value(cfg.ae.n_blocks);
    w.key("heads").value(cfg.ae.heads);
    w.key("ff_hidden").value(cfg.ae.ff_hidden);
    w.key("epochs").value(cfg.ae.epochs);
    w.key("batch").value(cfg.ae.batch);
    w.key("lr").value(cfg.ae.lr);
    w.end_object();
    w.key("augment");
    w.begin_object();
    w.key("bin_fraction").value(cfg.augment.bin_fraction);
    w.key("amp_sigma").value(cfg.augment.amp_sigma);
    w.key("phase_max").value(cfg.augment.phase_max);
    w.key("mode").value(cfg.augment.mode == AugmentMode::channel_wise ? "channel_wise"
                                                                      : "all_channel");
    w.end_object();
    w.key("encoder");
    w.begin_object();
    w.key("conv_channels");
    w.begin_array();
    for (std::size_t c : cfg.encoder.conv_channels) w.value(c);
    w.end_array();
    w.key("kernel").value(cfg.encoder.kernel);
    w.key("embed_dim").value(cfg.encoder.embed_dim);
    w.key("epochs").value(cfg.encoder.epochs);
    w.key("batch").value(cfg.encoder.batch);
    w.key("lr").value(cfg.encoder.lr);
    w.key("margin").value(cfg.encoder.margin);
    w.end_object();
    w.key("main");
    w.begin_object();
    w.key("d_model").value(cfg.main.d_model);
    w.key("blocks").value(cfg.main.n_blocks);
    w.key("heads").value(cfg.main.heads);
    w.key("ff_hidden").value(cfg.main.ff_hidden);
    w.key("classes").value(cfg.main.n_classes);
    w.key("mlp_hidden").value(cfg.main.mlp_hidden);
    w.key("epochs").value(cfg.main.epochs);
    w.key("batch").value(cfg.main.batch);
    w.key("lr").value(cfg.main.lr);
    w.key("literal_eq9_sign").value(cfg.main.literal_eq9_sign);
    w.end_object();
    w.end_object();
}

}  // namespace calad
