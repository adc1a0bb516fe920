#pragma once

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mixfreq/corpus.hpp"
#include "mixfreq/errors.hpp"
#include "mixfreq/metrics.hpp"
#include "mixfreq/pipeline.hpp"
#include "mixfreq/sampling.hpp"

// Line-delimited JSON readers/writers for every record kind that crosses a
// file boundary: datasets, predictions, references, dialogue traces,
// annotations, and generated QA records.

namespace mixfreq {

namespace records {

inline nlohmann::json segment_to_json(const Segment& s) {
    return nlohmann::json{{"start_s", s.start_s}, {"end_s", s.end_s}};
}

inline Segment segment_from_json(const nlohmann::json& j) {
    if (!j.contains("start_s") || !j.contains("end_s")) {
        throw IoError("segment record needs start_s and end_s");
    }
    return Segment(j.at("start_s").get<double>(), j.at("end_s").get<double>());
}

inline std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<nlohmann::json> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            out.push_back(nlohmann::json::parse(line));
        } catch (const nlohmann::json::exception& e) {
            throw IoError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

inline void write_jsonl(const std::filesystem::path& path,
                        const std::vector<nlohmann::json>& lines) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    for (const nlohmann::json& j : lines) out << j.dump() << "\n";
    if (!out) throw IoError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Datasets (QaItem)
// ---------------------------------------------------------------------------

inline nlohmann::json qa_item_to_json(const QaItem& item) {
    nlohmann::json j;
    j["item_id"] = item.item_id;
    j["video_id"] = item.video_id;
    j["frame_count"] = item.frame_count;
    j["fps"] = item.fps;
    j["question"] = item.question;
    j["gt_segments"] = nlohmann::json::array();
    for (const Segment& s : item.gt_segments) j["gt_segments"].push_back(segment_to_json(s));
    j["reference_answer"] = item.reference_answer;
    return j;
}

// Accepts both the dataset shape ({item_id, question, ...}) and generated
// QA records ({task, turns, ...}); for the latter the first turn supplies
// question and reference answer.
inline QaItem qa_item_from_json(const nlohmann::json& j, std::size_t line_no) {
    const auto fail = [&](const std::string& what) {
        throw IoError("dataset line " + std::to_string(line_no) + ": " + what);
    };
    QaItem item;
    if (j.contains("item_id")) {
        item.item_id = j.at("item_id").get<std::string>();
    } else {
        item.item_id = "item-" + std::to_string(line_no);
    }
    if (!j.contains("video_id")) fail("missing video_id");
    item.video_id = j.at("video_id").get<std::string>();

    if (j.contains("question")) {
        item.question = j.at("question").get<std::string>();
        if (j.contains("reference_answer")) {
            item.reference_answer = j.at("reference_answer").get<std::string>();
        }
    } else if (j.contains("turns") && j.at("turns").is_array() && !j.at("turns").empty()) {
        item.question = j.at("turns").at(0).at("question").get<std::string>();
        item.reference_answer = j.at("turns").at(0).at("answer").get<std::string>();
    } else {
        fail("record has neither question nor turns");
    }

    if (j.contains("gt_segments")) {
        for (const nlohmann::json& js : j.at("gt_segments")) {
            item.gt_segments.push_back(segment_from_json(js));
        }
    } else if (j.contains("gt_start_s") && j.contains("gt_end_s")) {
        item.gt_segments.push_back(
            Segment(j.at("gt_start_s").get<double>(), j.at("gt_end_s").get<double>()));
    }

    const double fps = j.contains("fps") ? j.at("fps").get<double>() : 0.0;
    if (j.contains("frame_count")) {
        item.frame_count = j.at("frame_count").get<std::size_t>();
        item.fps = fps > 0.0 ? fps : 1.0;
    } else if (fps > 0.0 && j.contains("duration_s")) {
        item.fps = fps;
        item.frame_count =
            static_cast<std::size_t>(std::llround(j.at("duration_s").get<double>() * fps));
    } else {
        fail("record needs frame_count, or fps plus duration_s");
    }
    if (item.frame_count == 0) fail("frame_count is zero");
    return item;
}

inline std::vector<QaItem> load_dataset(const std::filesystem::path& path) {
    std::vector<QaItem> items;
    std::size_t line_no = 0;
    for (const nlohmann::json& j : read_jsonl(path)) {
        items.push_back(qa_item_from_json(j, ++line_no));
    }
    return items;
}

inline void save_dataset(const std::filesystem::path& path, const std::vector<QaItem>& items) {
    std::vector<nlohmann::json> lines;
    lines.reserve(items.size());
    for (const QaItem& item : items) lines.push_back(qa_item_to_json(item));
    write_jsonl(path, lines);
}

// ---------------------------------------------------------------------------
// Predictions and references
// ---------------------------------------------------------------------------

struct PredictionRecord {
    std::string item_id;
    Segment predicted;
    std::string answer_text;
};

struct ReferenceRecord {
    std::string item_id;
    Segment reference;
    std::string answer_text;
    std::string question;  // optional, used by judge-based evaluation
};

inline nlohmann::json prediction_to_json(const PredictionRecord& p) {
    return nlohmann::json{{"item_id", p.item_id},
                          {"predicted_start_s", p.predicted.start_s},
                          {"predicted_end_s", p.predicted.end_s},
                          {"answer_text", p.answer_text}};
}

inline PredictionRecord prediction_from_json(const nlohmann::json& j, std::size_t line_no) {
    if (!j.contains("item_id") || !j.contains("predicted_start_s") ||
        !j.contains("predicted_end_s")) {
        throw IoError("prediction line " + std::to_string(line_no) +
                      ": needs item_id, predicted_start_s, predicted_end_s");
    }
    PredictionRecord p;
    p.item_id = j.at("item_id").get<std::string>();
    p.predicted = Segment(j.at("predicted_start_s").get<double>(),
                          j.at("predicted_end_s").get<double>());
    if (j.contains("answer_text")) p.answer_text = j.at("answer_text").get<std::string>();
    return p;
}

inline nlohmann::json reference_to_json(const ReferenceRecord& r) {
    nlohmann::json j{{"item_id", r.item_id},
                     {"start_s", r.reference.start_s},
                     {"end_s", r.reference.end_s},
                     {"answer_text", r.answer_text}};
    if (!r.question.empty()) j["question"] = r.question;
    return j;
}

inline ReferenceRecord reference_from_json(const nlohmann::json& j, std::size_t line_no) {
    if (!j.contains("item_id") || !j.contains("start_s") || !j.contains("end_s")) {
        throw IoError("reference line " + std::to_string(line_no) +
                      ": needs item_id, start_s, end_s");
    }
    ReferenceRecord r;
    r.item_id = j.at("item_id").get<std::string>();
    r.reference = Segment(j.at("start_s").get<double>(), j.at("end_s").get<double>());
    if (j.contains("answer_text")) r.answer_text = j.at("answer_text").get<std::string>();
    if (j.contains("question")) r.question = j.at("question").get<std::string>();
    return r;
}

inline std::vector<PredictionRecord> load_predictions(const std::filesystem::path& path) {
    std::vector<PredictionRecord> out;
    std::size_t line_no = 0;
    for (const nlohmann::json& j : read_jsonl(path)) {
        out.push_back(prediction_from_json(j, ++line_no));
    }
    return out;
}

inline void save_predictions(const std::filesystem::path& path,
                             const std::vector<PredictionRecord>& preds) {
    std::vector<nlohmann::json> lines;
    lines.reserve(preds.size());
    for (const PredictionRecord& p : preds) lines.push_back(prediction_to_json(p));
    write_jsonl(path, lines);
}

inline std::vector<ReferenceRecord> load_references(const std::filesystem::path& path) {
    std::vector<ReferenceRecord> out;
    std::size_t line_no = 0;
    for (const nlohmann::json& j : read_jsonl(path)) {
        out.push_back(reference_from_json(j, ++line_no));
    }
    return out;
}

inline void save_references(const std::filesystem::path& path,
                            const std::vector<ReferenceRecord>& refs) {
    std::vector<nlohmann::json> lines;
    lines.reserve(refs.size());
    for (const ReferenceRecord& r : refs) lines.push_back(reference_to_json(r));
    write_jsonl(path, lines);
}

// ---------------------------------------------------------------------------
// Dialogue traces
// ---------------------------------------------------------------------------

inline nlohmann::json trace_to_json(const std::string& item_id, const DialogueTrace& t) {
    nlohmann::json j;
    j["item_id"] = item_id;
    j["q1_prompt"] = t.q1_prompt;
    j["q1_reply"] = t.q1_reply;
    j["parsed_segments"] = nlohmann::json::array();
    for (const Segment& s : t.parsed_segments) j["parsed_segments"].push_back(segment_to_json(s));
    j["grounding_skipped"] = t.grounding_skipped;
    j["fallback_used"] = t.fallback_used;
    j["q2_prompt"] = t.q2_prompt;
    j["answer"] = t.answer;
    j["token_counts"] = nlohmann::json::array();
    for (const auto& [label, rows] : t.token_counts) {
        j["token_counts"].push_back(nlohmann::json{{"label", label}, {"rows", rows}});
    }
    j["errored"] = t.errored;
    j["backend_error"] = t.backend_error;
    j["error_message"] = t.error_message;
    return j;
}

inline void save_traces(const std::filesystem::path& path,
                        const std::vector<BatchResult>& results) {
    std::vector<nlohmann::json> lines;
    lines.reserve(results.size());
    for (const BatchResult& r : results) lines.push_back(trace_to_json(r.item_id, r.trace));
    write_jsonl(path, lines);
}

// ---------------------------------------------------------------------------
// Annotations and generated QA records
// ---------------------------------------------------------------------------

inline nlohmann::json annotation_to_json(const Annotation& ann) {
    nlohmann::json j;
    j["video_id"] = ann.video_id;
    if (ann.duration_s > 0.0) j["duration_s"] = ann.duration_s;
    j["clips"] = nlohmann::json::array();
    for (const AnnotatedClip& c : ann.clips) {
        nlohmann::json jc;
        jc["start_s"] = c.segment.start_s;
        jc["end_s"] = c.segment.end_s;
        jc["caption"] = c.caption;
        jc["actions"] = c.actions;
        j["clips"].push_back(std::move(jc));
    }
    return j;
}

inline Annotation annotation_from_json(const nlohmann::json& j, std::size_t line_no) {
    const auto fail = [&](const std::string& what) {
        throw IoError("annotation line " + std::to_string(line_no) + ": " + what);
    };
    if (!j.contains("video_id") || !j.contains("clips")) fail("needs video_id and clips");
    Annotation ann;
    ann.video_id = j.at("video_id").get<std::string>();
    if (j.contains("duration_s")) ann.duration_s = j.at("duration_s").get<double>();
    for (const nlohmann::json& jc : j.at("clips")) {
        AnnotatedClip clip;
        clip.segment = segment_from_json(jc);
        if (jc.contains("caption")) clip.caption = jc.at("caption").get<std::string>();
        if (jc.contains("actions")) {
            clip.actions = jc.at("actions").get<std::vector<std::string>>();
        }
        if (clip.actions.empty()) fail("clip without actions");
        ann.clips.push_back(std::move(clip));
    }
    if (ann.clips.empty()) fail("annotation without clips");
    return ann;
}

inline std::vector<Annotation> load_annotations(const std::filesystem::path& path) {
    std::vector<Annotation> out;
    std::size_t line_no = 0;
    for (const nlohmann::json& j : read_jsonl(path)) {
        out.push_back(annotation_from_json(j, ++line_no));
    }
    return out;
}

inline nlohmann::json qa_record_to_json(const QaRecord& r) {
    nlohmann::json j;
    j["video_id"] = r.video_id;
    j["task"] = to_string(r.task);
    j["turns"] = nlohmann::json::array();
    for (const QaTurn& t : r.turns) {
        j["turns"].push_back(nlohmann::json{{"question", t.question}, {"answer", t.answer}});
    }
    j["gt_segments"] = nlohmann::json::array();
    for (const Segment& s : r.gt_segments) j["gt_segments"].push_back(segment_to_json(s));
    if (r.duration_s > 0.0) j["duration_s"] = r.duration_s;
    if (r.fps > 0.0) j["fps"] = r.fps;
    if (r.frame_count > 0) j["frame_count"] = r.frame_count;
    return j;
}

inline QaRecord qa_record_from_json(const nlohmann::json& j, std::size_t line_no) {
    const auto fail = [&](const std::string& what) {
        throw IoError("qa record line " + std::to_string(line_no) + ": " + what);
    };
    if (!j.contains("video_id") || !j.contains("task") || !j.contains("turns")) {
        fail("needs video_id, task, turns");
    }
    QaRecord r;
    r.video_id = j.at("video_id").get<std::string>();
    r.task = task_kind_from(j.at("task").get<std::string>());
    for (const nlohmann::json& jt : j.at("turns")) {
        r.turns.push_back(QaTurn{jt.at("question").get<std::string>(),
                                 jt.at("answer").get<std::string>()});
    }
    if (r.turns.empty()) fail("record without turns");
    if (j.contains("gt_segments")) {
        for (const nlohmann::json& js : j.at("gt_segments")) {
            r.gt_segments.push_back(segment_from_json(js));
        }
    }
    if (j.contains("duration_s")) r.duration_s = j.at("duration_s").get<double>();
    if (j.contains("fps")) r.fps = j.at("fps").get<double>();
    if (j.contains("frame_count")) r.frame_count = j.at("frame_count").get<std::size_t>();
    return r;
}

inline std::vector<QaRecord> load_qa_records(const std::filesystem::path& path) {
    std::vector<QaRecord> out;
    std::size_t line_no = 0;
    for (const nlohmann::json& j : read_jsonl(path)) {
        out.push_back(qa_record_from_json(j, ++line_no));
    }
    return out;
}

inline void save_qa_records(const std::filesystem::path& path,
                            const std::vector<QaRecord>& records) {
    std::vector<nlohmann::json> lines;
    lines.reserve(records.size());
    for (const QaRecord& r : records) lines.push_back(qa_record_to_json(r));
    write_jsonl(path, lines);
}

// Feature streams live in the matrix text format, one file per video.
inline FeatureStream load_feature_stream(const std::filesystem::path& path,
                                         const std::string& video_id, double fps) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open feature stream " + path.string());
    return FeatureStream(video_id, read_matrix(in), fps);
}

} // namespace records

} // namespace mixfreq
