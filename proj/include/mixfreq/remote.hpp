#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "mixfreq/errors.hpp"
#include "mixfreq/pipeline.hpp"

namespace mixfreq {

namespace wire {

// Token values travel as 32-bit little-endian reals, row-major.
inline std::string pack_f32_le(const std::vector<double>& values) {
    std::string out;
    out.reserve(values.size() * 4);
    for (double v : values) {
        const std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
        out.push_back(static_cast<char>(bits & 0xFF));
        out.push_back(static_cast<char>((bits >> 8) & 0xFF));
        out.push_back(static_cast<char>((bits >> 16) & 0xFF));
        out.push_back(static_cast<char>((bits >> 24) & 0xFF));
    }
    return out;
}

inline std::vector<double> unpack_f32_le(std::string_view bytes) {
    if (bytes.size() % 4 != 0) throw ArgumentError("f32 payload length not a multiple of 4");
    std::vector<double> out;
    out.reserve(bytes.size() / 4);
    for (std::size_t i = 0; i < bytes.size(); i += 4) {
        std::uint32_t bits = 0;
        for (std::size_t b = 0; b < 4; ++b) {
            bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i + b])) << (8 * b);
        }
        out.push_back(static_cast<double>(std::bit_cast<float>(bits)));
    }
    return out;
}

inline constexpr char kB64Alphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

inline std::string base64_encode(std::string_view bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 3 <= bytes.size(); i += 3) {
        const std::uint32_t n = (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i])) << 16) |
                                (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i + 1])) << 8) |
                                static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i + 2]));
        out.push_back(kB64Alphabet[(n >> 18) & 63]);
        out.push_back(kB64Alphabet[(n >> 12) & 63]);
        out.push_back(kB64Alphabet[(n >> 6) & 63]);
        out.push_back(kB64Alphabet[n & 63]);
    }
    const std::size_t rest = bytes.size() - i;
    if (rest == 1) {
        const std::uint32_t n = static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i])) << 16;
        out.push_back(kB64Alphabet[(n >> 18) & 63]);
        out.push_back(kB64Alphabet[(n >> 12) & 63]);
        out.push_back('=');
        out.push_back('=');
    } else if (rest == 2) {
        const std::uint32_t n = (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i])) << 16) |
                                (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i + 1])) << 8);
        out.push_back(kB64Alphabet[(n >> 18) & 63]);
        out.push_back(kB64Alphabet[(n >> 12) & 63]);
        out.push_back(kB64Alphabet[(n >> 6) & 63]);
        out.push_back('=');
    }
    return out;
}

inline std::string base64_decode(std::string_view text) {
    const auto value_of = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        return -1;
    };
    if (text.size() % 4 != 0) throw ArgumentError("base64 length not a multiple of 4");
    std::string out;
    out.reserve(text.size() / 4 * 3);
    for (std::size_t i = 0; i < text.size(); i += 4) {
        int vals[4];
        std::size_t pad = 0;
        for (std::size_t b = 0; b < 4; ++b) {
            const char c = text[i + b];
            if (c == '=') {
                // Padding may only close the final quantum.
                if (i + 4 != text.size() || b < 2) throw ArgumentError("base64 misplaced padding");
                vals[b] = 0;
                ++pad;
            } else {
                if (pad > 0) throw ArgumentError("base64 data after padding");
                vals[b] = value_of(c);
                if (vals[b] < 0) throw ArgumentError("base64 invalid character");
            }
        }
        const std::uint32_t n = (static_cast<std::uint32_t>(vals[0]) << 18) |
                                (static_cast<std::uint32_t>(vals[1]) << 12) |
                                (static_cast<std::uint32_t>(vals[2]) << 6) |
                                static_cast<std::uint32_t>(vals[3]);
        out.push_back(static_cast<char>((n >> 16) & 0xFF));
        if (pad < 2) out.push_back(static_cast<char>((n >> 8) & 0xFF));
        if (pad < 1) out.push_back(static_cast<char>(n & 0xFF));
    }
    return out;
}

// JSON document for one generate call.
inline nlohmann::json request_body(const std::vector<LabeledBlock>& blocks,
                                   const std::string& prompt) {
    nlohmann::json body;
    body["prompt"] = prompt;
    body["blocks"] = nlohmann::json::array();
    for (const LabeledBlock& b : blocks) {
        nlohmann::json jb;
        jb["label"] = b.label;
        jb["rows"] = b.tokens.row_count();
        jb["cols"] = b.tokens.dim();
        jb["data"] = base64_encode(pack_f32_le(b.tokens.tokens.data()));
        jb["timestamps"] = b.tokens.per_token_timestamp_s;
        body["blocks"].push_back(std::move(jb));
    }
    return body;
}

} // namespace wire

struct RemoteOptions {
    std::string path = "/generate";
    double timeout_s = 10.0;
    std::size_t retries = 2;  // attempts beyond the first
    std::size_t max_concurrency = 4;
};

// LanguageBackend over HTTP: POST {prompt, blocks} to a generation server,
// read {text}. Each call uses its own connection, so parallel calls are
// safe up to the declared concurrency.
class RemoteBackend final : public LanguageBackend {
  public:
    explicit RemoteBackend(std::string base_url, RemoteOptions options = {})
        : base_url_(std::move(base_url)), options_(options) {
        if (base_url_.empty()) throw ArgumentError("remote backend needs an endpoint URL");
    }

    std::string generate(const std::vector<LabeledBlock>& blocks,
                         const std::string& prompt) override {
        const std::string payload = wire::request_body(blocks, prompt).dump();
        std::string last_error = "no attempt made";
        for (std::size_t attempt = 0; attempt <= options_.retries; ++attempt) {
            httplib::Client client(base_url_);
            const auto whole = static_cast<time_t>(options_.timeout_s);
            const auto micros =
                static_cast<time_t>(std::llround((options_.timeout_s - static_cast<double>(whole)) * 1e6));
            client.set_connection_timeout(whole, micros);
            client.set_read_timeout(whole, micros);
            client.set_write_timeout(whole, micros);

            httplib::Result res = client.Post(options_.path, payload, "application/json");
            if (!res) {
                last_error = "transport failure: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status != 200) {
                last_error = "server returned status " + std::to_string(res->status);
                continue;
            }
            try {
                const nlohmann::json reply = nlohmann::json::parse(res->body);
                if (!reply.contains("text") || !reply["text"].is_string()) {
                    throw BackendError("reply missing text field");
                }
                return reply["text"].get<std::string>();
            } catch (const nlohmann::json::exception& e) {
                throw BackendError(std::string("malformed reply: ") + e.what());
            }
        }
        throw BackendError("generate failed after " + std::to_string(options_.retries + 1) +
                           " attempts; last error: " + last_error);
    }

    std::size_t max_concurrency() const override { return options_.max_concurrency; }

  private:
    std::string base_url_;
    RemoteOptions options_;
};

} // namespace mixfreq
