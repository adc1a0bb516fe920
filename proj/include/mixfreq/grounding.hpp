#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "mixfreq/encoding.hpp"
#include "mixfreq/errors.hpp"
#include "mixfreq/sampling.hpp"

namespace mixfreq {

// Discretized-time text protocol: timestamps are written as zero-padded
// bin indices in [0, n_bins), e.g. 000..999 for the default 1000 bins.
struct GroundingProtocol {
    std::size_t n_bins = 1000;
    std::size_t digits = 3;

    GroundingProtocol() = default;

    explicit GroundingProtocol(std::size_t bins) : n_bins(bins), digits(1) {
        if (n_bins < 2) throw ArgumentError("grounding protocol needs at least 2 bins");
        for (std::size_t v = (n_bins - 1) / 10; v > 0; v /= 10) ++digits;
    }
};

// Token the language backend substitutes with visual input.
inline constexpr std::string_view kVideoToken = "<video>";

inline constexpr std::string_view kGroundingRequest =
    "Please provide the temporal segment help to reason the question: ";
inline constexpr std::string_view kFocusCluePrefix = "Additional temporal clues to focus on: ";

// Wire-format prompt skeletons; <question> and <clues> are substituted
// exactly once each.
struct PromptTemplate {
    enum class Kind { grounding_q1, focused_q2 };

    Kind kind = Kind::grounding_q1;
    std::string text;

    PromptTemplate(Kind k, std::string t) : kind(k), text(std::move(t)) {
        const auto count = [&](std::string_view needle) {
            std::size_t n = 0;
            for (std::size_t pos = text.find(needle); pos != std::string::npos;
                 pos = text.find(needle, pos + 1)) {
                ++n;
            }
            return n;
        };
        if (count("<question>") != 1) {
            throw ArgumentError("prompt template must contain <question> exactly once");
        }
        const std::size_t clues = count("<clues>");
        if ((kind == Kind::focused_q2) != (clues == 1) || clues > 1) {
            throw ArgumentError("focused template must contain <clues> exactly once");
        }
    }

    static PromptTemplate grounding() {
        return PromptTemplate(Kind::grounding_q1,
                              std::string(kVideoToken) + "\n" + std::string(kGroundingRequest) +
                                  "<question>");
    }

    static PromptTemplate focused() {
        return PromptTemplate(Kind::focused_q2,
                              std::string(kFocusCluePrefix) + "<clues>\n<question>");
    }

    std::string substitute(std::string_view question, std::string_view clues) const {
        std::string out = text;
        const auto replace_once = [&out](std::string_view needle, std::string_view value) {
            const std::size_t pos = out.find(needle);
            if (pos != std::string::npos) out.replace(pos, needle.size(), value);
        };
        replace_once("<question>", question);
        replace_once("<clues>", clues);
        return out;
    }
};

// "from SSS to EEE" with both endpoints discretized; an end at the video's
// full duration lands in the last bin.
inline std::string format_segment(const Segment& seg, double duration_s,
                                  const GroundingProtocol& proto) {
    const auto pad = [&](std::size_t bin) {
        std::string s = std::to_string(bin);
        if (s.size() < proto.digits) s.insert(0, proto.digits - s.size(), '0');
        return s;
    };
    const std::size_t start_bin = temporal_bin(seg.start_s, duration_s, proto.n_bins);
    const std::size_t end_bin = temporal_bin(seg.end_s, duration_s, proto.n_bins);
    return "from " + pad(start_bin) + " to " + pad(end_bin);
}

namespace detail {

inline bool is_word_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

// Matches `word` at `pos` as a standalone word (non-word chars or string
// edges on both sides).
inline bool word_at(std::string_view s, std::size_t pos, std::string_view word) {
    if (s.compare(pos, word.size(), word) != 0) return false;
    if (pos > 0 && is_word_char(s[pos - 1])) return false;
    const std::size_t end = pos + word.size();
    return end >= s.size() || !is_word_char(s[end]);
}

inline std::size_t skip_spaces(std::string_view s, std::size_t pos) {
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    return pos;
}

// Reads a run of decimal digits; returns npos in *value when absent.
// Values beyond any plausible bin count saturate instead of wrapping.
inline std::size_t read_digits(std::string_view s, std::size_t pos, std::size_t* value) {
    constexpr std::size_t kSaturate = 1000000000000000ULL;
    std::size_t v = 0;
    std::size_t start = pos;
    while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
        if (v < kSaturate) v = v * 10 + static_cast<std::size_t>(s[pos] - '0');
        ++pos;
    }
    *value = pos == start ? std::string::npos : v;
    return pos;
}

} // namespace detail

// Extracts every "from <digits> to <digits>" span, keeps those that are
// valid bins with start < end, converts to seconds, and returns a sorted,
// overlap-merged list. A reply with no valid span is a parse error; choosing
// a fallback segment is the caller's call.
inline std::vector<Segment> parse_segments(std::string_view reply, double duration_s,
                                           const GroundingProtocol& proto) {
    if (!(duration_s > 0.0)) throw DegenerateTimelineError("parse_segments: zero duration");
    std::vector<Segment> found;
    std::size_t pos = 0;
    while (pos < reply.size()) {
        const std::size_t at = reply.find("from", pos);
        if (at == std::string::npos) break;
        pos = at + 4;
        if (!detail::word_at(reply, at, "from")) continue;

        std::size_t cursor = detail::skip_spaces(reply, at + 4);
        std::size_t start_bin = 0;
        cursor = detail::read_digits(reply, cursor, &start_bin);
        if (start_bin == std::string::npos) continue;

        std::size_t after_digits = detail::skip_spaces(reply, cursor);
        if (after_digits == cursor || !detail::word_at(reply, after_digits, "to")) continue;

        cursor = detail::skip_spaces(reply, after_digits + 2);
        std::size_t end_bin = 0;
        cursor = detail::read_digits(reply, cursor, &end_bin);
        if (end_bin == std::string::npos) continue;

        pos = cursor;  // consume the whole span: matches never overlap
        if (start_bin >= proto.n_bins || end_bin >= proto.n_bins) continue;
        if (start_bin >= end_bin) continue;
        const double unit = duration_s / static_cast<double>(proto.n_bins);
        found.push_back(Segment(static_cast<double>(start_bin) * unit,
                                static_cast<double>(end_bin) * unit));
    }
    if (found.empty()) {
        throw GroundingParseError("no temporal segment found in reply: " +
                                  std::string(reply.substr(0, 120)));
    }
    std::sort(found.begin(), found.end(),
              [](const Segment& a, const Segment& b) { return a.start_s < b.start_s; });
    std::vector<Segment> merged;
    merged.push_back(found.front());
    for (std::size_t i = 1; i < found.size(); ++i) {
        if (found[i].start_s < merged.back().end_s) {
            merged.back().end_s = std::max(merged.back().end_s, found[i].end_s);
        } else {
            merged.push_back(found[i]);
        }
    }
    return merged;
}

// First-round prompt: ask for the relevant temporal segment.
inline std::string build_q1(std::string_view question) {
    if (question.empty()) throw ArgumentError("build_q1: empty question");
    return PromptTemplate::grounding().substitute(question, "");
}

// Second-round prompt: the grounded segments as textual clues, then the
// original question.
inline std::string build_q2(std::string_view question, const std::vector<Segment>& segments,
                            double duration_s, const GroundingProtocol& proto) {
    if (question.empty()) throw ArgumentError("build_q2: empty question");
    if (segments.empty()) throw ArgumentError("build_q2: no segments to cite");
    std::string clues;
    for (std::size_t i = 0; i < segments.size(); ++i) {
        if (i > 0) clues += ", ";
        clues += format_segment(segments[i], duration_s, proto);
    }
    return PromptTemplate::focused().substitute(question, clues);
}

} // namespace mixfreq
