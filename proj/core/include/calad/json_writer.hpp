#pragma once

#include <cstdio>
#include <string>
#include <vector>

namespace calad {

// Formats a double with 17 significant digits (round-trip exact).
inline std::string json_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Minimal streaming JSON writer with deterministic byte output. Keys are
// emitted in call order; doubles use 17 significant digits.
class JsonWriter {
public:
    const std::string& str() const { return out_; }

    JsonWriter& begin_object() {
        comma();
        out_ += '{';
        stack_.push_back(false);
        return *this;
    }
    JsonWriter& end_object() {
        out_ += '}';
        stack_.pop_back();
        mark_value();
        return *this;
    }
    JsonWriter& begin_array() {
        comma();
        out_ += '[';
        stack_.push_back(false);
        return *this;
    }
    JsonWriter& end_array() {
        out_ += ']';
        stack_.pop_back();
        mark_value();
        return *this;
    }
    JsonWriter& key(const std::string& k) {
        comma();
        write_string(k);
        out_ += ':';
        pending_key_ = true;
        return *this;
    }
    JsonWriter& value(double v) {
        comma();
        out_ += json_double(v);
        mark_value();
        return *this;
    }
    JsonWriter& value(std::uint64_t v) {
        comma();
        out_ += std::to_string(v);
        mark_value();
        return *this;
    }
    JsonWriter& value(std::int64_t v) {
        comma();
        out_ += std::to_string(v);
        mark_value();
        return *this;
    }
    JsonWriter& value(int v) { return value(static_cast<std::int64_t>(v)); }
    JsonWriter& value(std::size_t v) { return value(static_cast<std::uint64_t>(v)); }
    JsonWriter& value(bool v) {
        comma();
        out_ += v ? "true" : "false";
        mark_value();
        return *this;
    }
    JsonWriter& value(const std::string& v) {
        comma();
        write_string(v);
        mark_value();
        return *this;
    }
    JsonWriter& value(const char* v) { return value(std::string(v)); }

private:
    void comma() {
        if (pending_key_) {
            pending_key_ = false;
            return;
        }
        if (!stack_.empty() && stack_.back()) out_ += ',';
    }
    void mark_value() {
        if (!stack_.empty()) stack_.back() = true;
    }
    void write_string(const std::string& s) {
        out_ += '"';
        for (char c : s) {
            switch (c) {
                case '"': out_ += "\\\""; break;
                case '\\': out_ += "\\\\"; break;
                case '\n': out_ += "\\n"; break;
                case '\t': out_ += "\\t"; break;
                case '\r': out_ += "\\r"; break;
                default:
                    if (static_cast<unsigned char>(c) < 0x20) {
                        char buf[8];
                        std::snprintf(buf, sizeof(buf), "\\u%04x", c);
                        out_ += buf;
                    } else {
                        out_ += c;
                    }
            }
        }
        out_ += '"';
    }

    std::string out_;
    std::vector<bool> stack_;
    bool pending_key_ = false;
};

}  // namespace calad
