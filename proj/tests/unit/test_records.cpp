#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mixfreq/mixfreq.hpp"

using namespace mixfreq;
using nlohmann::json;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    const auto path = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove(path);
    return path;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
}

} // namespace

TEST_CASE("jsonl io skips blank lines and reports parse errors by line") {
    const auto path = temp_file("mixfreq_records_lines.jsonl");

    SECTION("write then read round-trips") {
        records::write_jsonl(path, {json{{"a", 1}}, json{{"b", "two"}}});
        const std::vector<json> lines = records::read_jsonl(path);
        REQUIRE(lines.size() == 2);
        REQUIRE(lines[0].at("a") == 1);
        REQUIRE(lines[1].at("b") == "two");
    }
    SECTION("blank lines are skipped") {
        write_text(path, "{\"a\":1}\n\n{\"a\":2}\n");
        REQUIRE(records::read_jsonl(path).size() == 2);
    }
    SECTION("a malformed line names its line number") {
        write_text(path, "{\"a\":1}\nnot json\n");
        try {
            records::read_jsonl(path);
            FAIL("expected IoError");
        } catch (const IoError& e) {
            REQUIRE(std::string(e.what()).find(":2:") != std::string::npos);
        }
    }
    SECTION("missing file raises") {
        REQUIRE_THROWS_AS(records::read_jsonl(temp_file("mixfreq_no_such.jsonl")), IoError);
    }
}

TEST_CASE("dataset items parse from several shapes") {
    SECTION("explicit dataset shape") {
        const json j = {{"item_id", "q1"},
                        {"video_id", "v"},
                        {"frame_count", 120},
                        {"fps", 2.0},
                        {"question", "what happens?"},
                        {"gt_segments", json::array({{{"start_s", 3.0}, {"end_s", 9.0}}})},
                        {"reference_answer", "a dog runs"}};
        const QaItem item = records::qa_item_from_json(j, 1);
        REQUIRE(item.item_id == "q1");
        REQUIRE(item.video_id == "v");
        REQUIRE(item.frame_count == 120);
        REQUIRE(item.fps == 2.0);
        REQUIRE(item.question == "what happens?");
        REQUIRE(item.gt_segments.size() == 1);
        REQUIRE(item.gt_segments[0] == Segment(3.0, 9.0));
        REQUIRE(item.reference_answer == "a dog runs");
    }
    SECTION("item_id defaults to the line number") {
        const json j = {{"video_id", "v"}, {"frame_count", 10}, {"question", "?"}};
        const QaItem item = records::qa_item_from_json(j, 7);
        REQUIRE(item.item_id == "item-7");
        REQUIRE(item.fps == 1.0);  // frame_count without fps implies one per second
    }
    SECTION("generated records supply question and answer via turns") {
        const json j = {
            {"video_id", "v"},
            {"frame_count", 10},
            {"turns", json::array({{{"question", "when?"}, {"answer", "from 000 to 099"}}})}};
        const QaItem item = records::qa_item_from_json(j, 1);
        REQUIRE(item.question == "when?");
        REQUIRE(item.reference_answer == "from 000 to 099");
    }
    SECTION("flat gt_start_s and gt_end_s also work") {
        const json j = {{"video_id", "v"},
                        {"frame_count", 10},
                        {"question", "?"},
                        {"gt_start_s", 1.0},
                        {"gt_end_s", 4.0}};
        const QaItem item = records::qa_item_from_json(j, 1);
        REQUIRE(item.gt_segments == std::vector<Segment>{Segment(1.0, 4.0)});
    }
    SECTION("fps plus duration derive the frame count") {
        const json j = {{"video_id", "v"}, {"fps", 2.5}, {"duration_s", 8.0}, {"question", "?"}};
        const QaItem item = records::qa_item_from_json(j, 1);
        REQUIRE(item.frame_count == 20);
        REQUIRE(item.fps == 2.5);
    }
    SECTION("invalid records raise IoError") {
        REQUIRE_THROWS_AS(
            records::qa_item_from_json({{"frame_count", 10}, {"question", "?"}}, 1), IoError);
        REQUIRE_THROWS_AS(
            records::qa_item_from_json({{"video_id", "v"}, {"frame_count", 10}}, 1), IoError);
        REQUIRE_THROWS_AS(
            records::qa_item_from_json({{"video_id", "v"}, {"question", "?"}}, 1), IoError);
        REQUIRE_THROWS_AS(records::qa_item_from_json(
                              {{"video_id", "v"}, {"frame_count", 0}, {"question", "?"}}, 1),
                          IoError);
    }
    SECTION("save and load preserve every field") {
        QaItem item;
        item.item_id = "rt";
        item.video_id = "v";
        item.frame_count = 60;
        item.fps = 3.0;
        item.question = "q";
        item.reference_answer = "a";
        item.gt_segments = {Segment(0.0, 5.0), Segment(8.0, 12.0)};
        const auto path = temp_file("mixfreq_records_dataset.jsonl");
        records::save_dataset(path, {item});
        const std::vector<QaItem> back = records::load_dataset(path);
        REQUIRE(back.size() == 1);
        REQUIRE(back[0].item_id == item.item_id);
        REQUIRE(back[0].frame_count == item.frame_count);
        REQUIRE(back[0].fps == item.fps);
        REQUIRE(back[0].gt_segments == item.gt_segments);
        REQUIRE(back[0].reference_answer == item.reference_answer);
    }
}

TEST_CASE("prediction and reference records round-trip flat keys") {
    SECTION("prediction json uses predicted_start_s and predicted_end_s") {
        const records::PredictionRecord p{"id1", Segment(2.0, 6.0), "an answer"};
        const json j = records::prediction_to_json(p);
        REQUIRE(j.at("item_id") == "id1");
        REQUIRE(j.at("predicted_start_s") == 2.0);
        REQUIRE(j.at("predicted_end_s") == 6.0);
        REQUIRE(j.at("answer_text") == "an answer");
        const records::PredictionRecord back = records::prediction_from_json(j, 1);
        REQUIRE(back.item_id == p.item_id);
        REQUIRE(back.predicted == p.predicted);
        REQUIRE(back.answer_text == p.answer_text);
    }
    SECTION("missing prediction keys raise") {
        REQUIRE_THROWS_AS(records::prediction_from_json({{"item_id", "x"}}, 3), IoError);
    }
    SECTION("reference question survives only when present") {
        records::ReferenceRecord r{"id2", Segment(0.0, 4.0), "ref text", "why?"};
        json j = records::reference_to_json(r);
        REQUIRE(j.at("question") == "why?");
        r.question.clear();
        j = records::reference_to_json(r);
        REQUIRE(!j.contains("question"));
        const records::ReferenceRecord back = records::reference_from_json(j, 1);
        REQUIRE(back.reference == r.reference);
        REQUIRE(back.question.empty());
    }
    SECTION("file round-trip") {
        const auto ppath = temp_file("mixfreq_records_preds.jsonl");
        const auto rpath = temp_file("mixfreq_records_refs.jsonl");
        records::save_predictions(ppath, {{"a", Segment(1.0, 2.0), "x"}});
        records::save_references(rpath, {{"a", Segment(1.0, 3.0), "y", "q"}});
        REQUIRE(records::load_predictions(ppath).size() == 1);
        REQUIRE(records::load_references(rpath)[0].question == "q");
    }
}

TEST_CASE("dialogue traces serialize every field") {
    DialogueTrace t;
    t.q1_prompt = "p1";
    t.q1_reply = "from 100 to 200";
    t.parsed_segments = {Segment(10.0, 20.0)};
    t.q2_prompt = "p2";
    t.answer = "final";
    t.token_counts = {{"low", 480}, {"high", 96}};
    t.errored = true;
    t.backend_error = true;
    t.error_message = "remote refused";
    const json j = records::trace_to_json("it", t);
    REQUIRE(j.at("item_id") == "it");
    REQUIRE(j.at("q1_reply") == "from 100 to 200");
    REQUIRE(j.at("parsed_segments").size() == 1);
    REQUIRE(j.at("grounding_skipped") == false);
    REQUIRE(j.at("fallback_used") == false);
    REQUIRE(j.at("token_counts").at(0).at("label") == "low");
    REQUIRE(j.at("token_counts").at(1).at("rows") == 96);
    REQUIRE(j.at("errored") == true);
    REQUIRE(j.at("backend_error") == true);
    REQUIRE(j.at("error_message") == "remote refused");
}

TEST_CASE("annotations round-trip and reject clips without actions") {
    Annotation ann;
    ann.video_id = "vid";
    ann.duration_s = 30.0;
    ann.clips = {AnnotatedClip{Segment(0.0, 12.0), "a caption", {"walk", "wave"}},
                 AnnotatedClip{Segment(12.0, 30.0), "", {"run"}}};
    const auto path = temp_file("mixfreq_records_ann.jsonl");
    records::write_jsonl(path, {records::annotation_to_json(ann)});
    const std::vector<Annotation> back = records::load_annotations(path);
    REQUIRE(back.size() == 1);
    REQUIRE(back[0].video_id == "vid");
    REQUIRE(back[0].duration_s == 30.0);
    REQUIRE(back[0].clips.size() == 2);
    REQUIRE(back[0].clips[0].segment == ann.clips[0].segment);
    REQUIRE(back[0].clips[0].caption == "a caption");
    REQUIRE(back[0].clips[0].actions == std::vector<std::string>{"walk", "wave"});
    REQUIRE(back[0].clips[1].actions == std::vector<std::string>{"run"});

    const json bad = {{"video_id", "v"},
                      {"clips", json::array({{{"start_s", 0.0}, {"end_s", 2.0}}})}};
    REQUIRE_THROWS_AS(records::annotation_from_json(bad, 4), IoError);
    REQUIRE_THROWS_AS(
        records::annotation_from_json({{"video_id", "v"}, {"clips", json::array()}}, 1), IoError);
}

TEST_CASE("generated qa records survive a file round-trip") {
    Annotation ann;
    ann.video_id = "vid";
    ann.clips = {AnnotatedClip{Segment(0.0, 8.0), "", {"walk"}},
                 AnnotatedClip{Segment(8.0, 20.0), "someone runs", {"run"}}};
    const std::vector<QaRecord> recs = gen_tasks(ann, GroundingProtocol{}, 11);

    const auto path = temp_file("mixfreq_records_qa.jsonl");
    records::save_qa_records(path, recs);
    const std::vector<QaRecord> back = records::load_qa_records(path);
    REQUIRE(back.size() == recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
        REQUIRE(back[i].video_id == recs[i].video_id);
        REQUIRE(back[i].task == recs[i].task);
        REQUIRE(back[i].turns.size() == recs[i].turns.size());
        for (std::size_t t = 0; t < recs[i].turns.size(); ++t) {
            REQUIRE(back[i].turns[t].question == recs[i].turns[t].question);
            REQUIRE(back[i].turns[t].answer == recs[i].turns[t].answer);
        }
        REQUIRE(back[i].gt_segments == recs[i].gt_segments);
        REQUIRE(back[i].duration_s == recs[i].duration_s);
    }

    // Zero playback geometry stays out of the serialized form.
    QaRecord bare;
    bare.video_id = "v";
    bare.task = TaskKind::captioning;
    bare.turns = {QaTurn{"q", "a"}};
    const json j = records::qa_record_to_json(bare);
    REQUIRE(!j.contains("duration_s"));
    REQUIRE(!j.contains("fps"));
    REQUIRE(!j.contains("frame_count"));
    REQUIRE_THROWS_AS(records::qa_record_from_json({{"video_id", "v"}}, 1), IoError);
}

TEST_CASE("feature streams load from matrix text files") {
    const Matrix feats = Matrix::random(12, 4, 99);
    const auto path = temp_file("mixfreq_records_feat.mat");
    write_matrix(path, feats);
    const FeatureStream s = records::load_feature_stream(path, "vid", 3.0);
    REQUIRE(s.video_id == "vid");
    REQUIRE(s.fps == 3.0);
    REQUIRE(s.features == feats);
    REQUIRE_THROWS_AS(
        records::load_feature_stream(temp_file("mixfreq_records_missing.mat"), "v", 1.0), IoError);
}
