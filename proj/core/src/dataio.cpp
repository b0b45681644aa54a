#include "calad/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "calad/errors.hpp"
#include "calad/prng.hpp"

namespace calad {

namespace {

constexpr double kNormEps = 1e-8;

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            cells.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    cells.push_back(trim(cur));
    return cells;
}

bool parse_double(const std::string& cell, double& out) {
    if (cell.empty()) return false;
    const char* begin = cell.data();
    const char* end = begin + cell.size();
    auto res = std::from_chars(begin, end, out);
    return res.ec == std::errc{} && res.ptr == end;
}

// Reads a numeric matrix; returns channel names (from an optional header)
// and rows. Throws IngestionError with file + line on malformed input.
void read_matrix(const std::string& path, Tensor& out, std::vector<std::string>& names) {
    std::ifstream in(path);
    if (!in) throw IngestionError(path + ": cannot open");
    std::string line;
    std::size_t line_no = 0;
    std::vector<double> values;
    std::size_t cols = 0;
    std::size_t rows = 0;
    bool header_checked = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto cells = split_csv_line(line);
        if (!header_checked) {
            header_checked = true;
            bool numeric = true;
            double tmp;
            for (const auto& c : cells) {
                if (!parse_double(c, tmp)) {
                    numeric = false;
                    break;
                }
            }
            if (!numeric) {
                names = cells;
                cols = cells.size();
                continue;
            }
            cols = cells.size();
        }
        if (cells.size() != cols) {
            throw IngestionError(path + ":" + std::to_string(line_no) + ": expected " +
                                 std::to_string(cols) + " cells, got " +
                                 std::to_string(cells.size()));
        }
        for (std::size_t j = 0; j < cells.size(); ++j) {
            double v;
            if (!parse_double(cells[j], v)) {
                throw IngestionError(path + ":" + std::to_string(line_no) +
                                     ": non-numeric cell '" + cells[j] + "'");
            }
            if (!std::isfinite(v)) {
                throw IngestionError(path + ":" + std::to_string(line_no) +
                                     ": non-finite value in row " + std::to_string(rows));
            }
            values.push_back(v);
        }
        ++rows;
    }
    if (rows == 0) throw IngestionError(path + ": no data rows");
    if (names.empty()) {
        for (std::size_t j = 0; j < cols; ++j) names.push_back("c" + std::to_string(j));
    }
    out = Tensor(Shape{rows, cols}, std::move(values));
}

std::vector<int> read_labels(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestionError(path + ": cannot open");
    std::vector<int> labels;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty()) continue;
        if (t == "0") {
            labels.push_back(0);
        } else if (t == "1") {
            labels.push_back(1);
        } else {
            throw IngestionError(path + ":" + std::to_string(line_no) +
                                 ": label must be 0 or 1, got '" + t + "'");
        }
    }
    return labels;
}

}  // namespace

TimeSeriesSet load_csv(const std::string& train_path, const std::string& test_path,
                       const std::string& label_path, std::size_t expected_channels) {
    TimeSeriesSet set;
    std::vector<std::string> train_names, test_names;
    read_matrix(train_path, set.train, train_names);
    read_matrix(test_path, set.test, test_names);
    if (set.train.shape[1] != set.test.shape[1]) {
        throw IngestionError(test_path + ": channel count " + std::to_string(set.test.shape[1]) +
                             " differs from train " + std::to_string(set.train.shape[1]));
    }
    if (expected_channels != 0 && set.train.shape[1] != expected_channels) {
        throw IngestionError(train_path + ": expected " + std::to_string(expected_channels) +
                             " channels, got " + std::to_string(set.train.shape[1]));
    }
    set.test_labels = read_labels(label_path);
    if (set.test_labels.size() != set.test.shape[0]) {
        throw IngestionError(label_path + ": " + std::to_string(set.test_labels.size()) +
                             " labels for " + std::to_string(set.test.shape[0]) + " test rows");
    }
    set.channel_names = train_names;
    set.entity_id = train_path;
    return set;
}

std::size_t corpus_channel_count(const std::string& corpus) {
    if (corpus == "MSL") return 55;
    if (corpus == "SMAP") return 25;
    if (corpus == "SMD") return 38;
    if (corpus == "SWaT") return 51;
    throw ConfigError("unknown corpus '" + corpus + "'");
}

std::pair<TimeSeriesSet, NormStats> normalize(const TimeSeriesSet& set) {
    if (set.train.ndim() != 2 || set.train.shape[0] == 0) {
        throw UsageError("normalize: empty train split");
    }
    const std::size_t T = set.train.shape[0], C = set.train.shape[1];
    NormStats stats;
    stats.mean.assign(C, 0.0);
    stats.stddev.assign(C, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t c = 0; c < C; ++c) stats.mean[c] += set.train(t, c);
    }
    for (std::size_t c = 0; c < C; ++c) stats.mean[c] /= static_cast<double>(T);
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t c = 0; c < C; ++c) {
            double d = set.train(t, c) - stats.mean[c];
            stats.stddev[c] += d * d;
        }
    }
    for (std::size_t c = 0; c < C; ++c) {
        stats.stddev[c] = std::sqrt(stats.stddev[c] / static_cast<double>(T));
        if (stats.stddev[c] < kNormEps) stats.stddev[c] = kNormEps;
    }
    TimeSeriesSet out = set;
    auto apply = [&](Tensor& m) {
        const std::size_t rows = m.shape[0];
        for (std::size_t t = 0; t < rows; ++t) {
            for (std::size_t c = 0; c < C; ++c) {
                m(t, c) = (m(t, c) - stats.mean[c]) / stats.stddev[c];
            }
        }
    };
    apply(out.train);
    apply(out.test);
    return {std::move(out), std::move(stats)};
}

WindowSet make_windows(const Tensor& series, std::size_t ws, std::size_t stride) {
    static const std::vector<int> no_labels;
    return make_windows(series, no_labels, ws, stride);
}

WindowSet make_windows(const Tensor& series, const std::vector<int>& point_labels,
                       std::size_t ws, std::size_t stride) {
    if (series.ndim() != 2) throw UsageError("make_windows: series must be [T, C]");
    const std::size_t T = series.shape[0], C = series.shape[1];
    if (ws == 0 || ws > T) {
        throw UsageError("make_windows: ws " + std::to_string(ws) + " exceeds series length " +
                         std::to_string(T));
    }
    if (stride == 0) throw UsageError("make_windows: stride must be >= 1");
    if (!point_labels.empty() && point_labels.size() != T) {
        throw UsageError("make_windows: label length does not match series");
    }
    const std::size_t N = (T - ws) / stride + 1;
    WindowSet out;
    out.ws = ws;
    out.stride = stride;
    out.windows = Tensor(Shape{N, ws, C});
    out.origin_index.resize(N);
    if (!point_labels.empty()) out.window_labels.assign(N, 0);
    for (std::size_t i = 0; i < N; ++i) {
        const std::size_t start = i * stride;
        out.origin_index[i] = start;
        const double* src = series.data.data() + start * C;
        double* dst = out.windows.data.data() + i * ws * C;
        std::copy(src, src + ws * C, dst);
        if (!point_labels.empty()) {
            for (std::size_t t = start; t < start + ws; ++t) {
                if (point_labels[t] == 1) {
                    out.window_labels[i] = 1;
                    break;
                }
            }
        }
    }
    return out;
}

namespace {

struct SineParams {
    double amp, period, phase;
};

double channel_base(const std::vector<SineParams>& sines, double t, double freq_mult) {
    double v = 0.0;
    for (const auto& s : sines) {
        v += s.amp * std::sin(6.283185307179586 * freq_mult * t / s.period + s.phase);
    }
    return v;
}

}  // namespace

TimeSeriesSet generate_synthetic(const SynthSpec& spec) {
    const std::size_t C = spec.channels;
    if (C < 1) throw UsageError("generate_synthetic: need at least one channel");
    for (std::size_t c : spec.relevant) {
        if (c >= C) throw UsageError("generate_synthetic: relevant channel out of range");
    }
    auto segments = spec.anomaly_segments;
    std::sort(segments.begin(), segments.end());
    for (std::size_t i = 0; i < segments.size(); ++i) {
        if (segments[i].first >= segments[i].second || segments[i].second > spec.t_test) {
            throw UsageError("generate_synthetic: segment outside test range");
        }
        if (i > 0 && segments[i].first < segments[i - 1].second) {
            throw UsageError("generate_synthetic: overlapping anomaly segments");
        }
    }

    Prng root(spec.seed);
    std::vector<std::vector<SineParams>> sines(C);
    for (std::size_t c = 0; c < C; ++c) {
        Prng rng = root.substream(hash_str("channel_params"), c);
        std::size_t n_sin = 1 + rng.next_below(3);
        for (std::size_t j = 0; j < n_sin; ++j) {
            SineParams s;
            s.amp = rng.uniform(0.4, 1.2);
            s.period = rng.uniform(16.0, 48.0);
            s.phase = rng.uniform(0.0, 6.283185307179586);
            sines[c].push_back(s);
        }
    }

    // Corruption mode per (segment, channel): 0 = amplitude x3, 1 = frequency x2.
    auto corruption_mode = [&](std::size_t seg, std::size_t c) {
        Prng rng = root.substream(hash_str("anomaly")).substream(seg, c);
        return rng.next_below(2);
    };

    auto in_segment = [&](std::size_t t, std::size_t& seg_out) {
        for (std::size_t s = 0; s < segments.size(); ++s) {
            if (t >= segments[s].first && t < segments[s].second) {
                seg_out = s;
                return true;
            }
        }
        return false;
    };

    TimeSeriesSet set;
    set.entity_id = "synthetic";
    set.true_relevant = spec.relevant;
    set.train = Tensor(Shape{spec.t_train, C});
    set.test = Tensor(Shape{spec.t_test, C});
    set.test_labels.assign(spec.t_test, 0);
    for (std::size_t c = 0; c < C; ++c) {
        set.channel_names.push_back("c" + std::to_string(c));
    }

    std::vector<bool> is_relevant(C, false);
    for (std::size_t c : spec.relevant) is_relevant[c] = true;

    for (std::size_t c = 0; c < C; ++c) {
        Prng noise = root.substream(hash_str("noise"), c);
        for (std::size_t t = 0; t < spec.t_train; ++t) {
            set.train(t, c) = channel_base(sines[c], static_cast<double>(t), 1.0) +
                              noise.normal(0.0, 0.05);
        }
        for (std::size_t t = 0; t < spec.t_test; ++t) {
            const double tg = static_cast<double>(spec.t_train + t);
            double v;
            std::size_t seg = 0;
            if (is_relevant[c] && in_segment(t, seg)) {
                if (corruption_mode(seg, c) == 0) {
                    v = 3.0 * channel_base(sines[c], tg, 1.0);
                } else {
                    v = channel_base(sines[c], tg, 2.0);
                }
            } else {
                v = channel_base(sines[c], tg, 1.0);
            }
            set.test(t, c) = v + noise.normal(0.0, 0.05);
        }
    }

    for (const auto& seg : segments) {
        for (std::size_t t = seg.first; t < seg.second; ++t) set.test_labels[t] = 1;
    }

    if (spec.shift) {
        // Level offset on irrelevant channels over the widest anomaly-free
        // stretch of the test split; labels stay 0.
        std::vector<std::pair<std::size_t, std::size_t>> gaps;
        std::size_t prev = 0;
        for (const auto& seg : segments) {
            if (seg.first > prev) gaps.emplace_back(prev, seg.first);
            prev = seg.second;
        }
        if (prev < spec.t_test) gaps.emplace_back(prev, spec.t_test);
        std::size_t best = 0;
        for (std::size_t i = 1; i < gaps.size(); ++i) {
            if (gaps[i].second - gaps[i].first > gaps[best].second - gaps[best].first) best = i;
        }
        if (!gaps.empty()) {
            const std::size_t gap_len = gaps[best].second - gaps[best].first;
            const std::size_t len = std::min<std::size_t>(200, gap_len / 2);
            const std::size_t start = gaps[best].first + (gap_len - len) / 2;
            for (std::size_t t = start; t < start + len; ++t) {
                for (std::size_t c = 0; c < C; ++c) {
                    if (!is_relevant[c]) set.test(t, c) += 1.5;
                }
            }
        }
    }

    return set;
}

void write_csv(const std::string& path, const Tensor& matrix,
               const std::vector<std::string>& channel_names) {
    std::ofstream out(path);
    if (!out) throw IngestionError(path + ": cannot open for writing");
    const std::size_t rows = matrix.shape[0], cols = matrix.shape[1];
    for (std::size_t j = 0; j < cols; ++j) {
        if (j) out << ",";
        out << (j < channel_names.size() ? channel_names[j] : "c" + std::to_string(j));
    }
    out << "\n";
    char buf[40];
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", matrix(i, j));
            if (j) out << ",";
            out << buf;
        }
        out << "\n";
    }
}

void write_labels(const std::string& path, const std::vector<int>& labels) {
    std::ofstream out(path);
    if (!out) throw IngestionError(path + ": cannot open for writing");
    for (int v : labels) out << v << "\n";
}

}  // namespace calad
