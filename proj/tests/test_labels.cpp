#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>
#include <stdexcept>

#include "sasot/labels.hpp"
#include "sasot/rng.hpp"
#include "testutil.hpp"

using namespace sasot::labels;

TEST_CASE("serialize merges two speakers chronologically") {
  const TsotLabel label = serialize_tsot(testutil::fig1_transcripts());
  CHECK(join_tokens(label.tokens) == testutil::fig1_label_text());
  CHECK(label.provenance.size() == label.tokens.size());
  CHECK(label.provenance[0] == 0);   // "hello"
  CHECK(label.provenance[2] == kChannelChange);
  CHECK(label.provenance[3] == 1);   // "I"
}

TEST_CASE("serialize single transcript has no channel changes") {
  SpeakerTranscript t{3,
                      {{"a", 0.0, 3}, {"b", 1.0, 3}, {"c", 2.0, 3}}};
  const TsotLabel label = serialize_tsot({t});
  CHECK(join_tokens(label.tokens) == "a b c");
  for (int p : label.provenance) CHECK(p == 3);
}

TEST_CASE("equal emission times break by speaker index") {
  SpeakerTranscript s0{0, {{"x", 1.0, 0}}};
  SpeakerTranscript s1{1, {{"y", 1.0, 1}}};
  CHECK(join_tokens(serialize_tsot({s0, s1}).tokens) == "x <cc> y");
  // order of the transcript list does not matter
  CHECK(join_tokens(serialize_tsot({s1, s0}).tokens) == "x <cc> y");
}

TEST_CASE("serialize validates its inputs") {
  SpeakerTranscript s0{0, {{"a", 0.0, 0}}};
  SpeakerTranscript s1{1, {{"b", 0.5, 1}}};
  SpeakerTranscript s2{2, {{"c", 1.0, 2}}};
  CHECK_THROWS_AS(serialize_tsot({s0, s1, s2}), std::invalid_argument);
  CHECK_THROWS_AS(serialize_tsot({}), std::invalid_argument);

  SpeakerTranscript unsorted{0, {{"b", 1.0, 0}, {"a", 0.5, 0}}};
  CHECK_THROWS_AS(serialize_tsot({unsorted}), std::invalid_argument);

  SpeakerTranscript duplicated{0, {{"a", 1.0, 0}, {"b", 1.0, 0}}};
  CHECK_THROWS_AS(serialize_tsot({duplicated}), std::invalid_argument);

  SpeakerTranscript reserved{0, {{"<cc>", 0.0, 0}}};
  CHECK_THROWS_AS(serialize_tsot({reserved}), std::invalid_argument);

  SpeakerTranscript mismatched{0, {{"a", 0.0, 1}}};
  CHECK_THROWS_AS(serialize_tsot({mismatched}), std::invalid_argument);

  SpeakerTranscript same_a{0, {{"a", 0.0, 0}}};
  SpeakerTranscript same_b{0, {{"b", 0.5, 0}}};
  CHECK_THROWS_AS(serialize_tsot({same_a, same_b}), std::invalid_argument);
}

TEST_CASE("deserialize splits channels at <cc>") {
  const auto [ch0, ch1] =
      split_channels(split_tokens(testutil::fig1_label_text()));
  CHECK(join_tokens(ch0) == "hello how are you");
  CHECK(join_tokens(ch1) == "I am fine");

  const auto [solo0, solo1] = split_channels(split_tokens("a b c"));
  CHECK(join_tokens(solo0) == "a b c");
  CHECK(solo1.empty());
}

TEST_CASE("deserialize tolerates malformed sequences") {
  // leading, double, and trailing <cc> each still toggle once:
  // channels go 0 -> 1 (a) -> 0 -> 1 (b) -> 0
  const auto [ch0, ch1] =
      split_channels(split_tokens("<cc> a <cc> <cc> b <cc>"));
  CHECK(ch0.empty());
  CHECK(join_tokens(ch1) == "a b");
}

TEST_CASE("roundtrip recovers both word sequences in order") {
  sasot::Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const auto transcripts = testutil::random_transcript_pair(rng);
    const TsotLabel label = serialize_tsot(transcripts);
    const auto [ch0, ch1] = deserialize_tsot(label);

    // channel 0 belongs to the speaker of the earliest word
    const auto& w0 = transcripts[0].words.front();
    const auto& w1 = transcripts[1].words.front();
    const bool spk0_first = w0.emit_time < w1.emit_time ||
                            (w0.emit_time == w1.emit_time);
    const auto& first = spk0_first ? transcripts[0] : transcripts[1];
    const auto& second = spk0_first ? transcripts[1] : transcripts[0];

    auto texts = [](const SpeakerTranscript& t) {
      std::vector<std::string> out;
      for (const auto& w : t.words) out.push_back(w.text);
      return out;
    };
    CHECK(ch0 == texts(first));
    CHECK(ch1 == texts(second));
  }
}

TEST_CASE("<cc> count equals adjacent cross-speaker pairs") {
  sasot::Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const auto transcripts = testutil::random_transcript_pair(rng);
    const TsotLabel label = serialize_tsot(transcripts);

    int cc = 0;
    for (const auto& tok : label.tokens)
      if (tok == kChannelChangeSym) ++cc;

    int switches = 0;
    int prev = kChannelChange;
    for (int p : label.provenance) {
      if (p == kChannelChange) continue;
      if (prev != kChannelChange && prev != p) ++switches;
      prev = p;
    }
    CHECK(cc == switches);

    // invariants: never two consecutive <cc>, no <cc> at the edges
    REQUIRE(!label.tokens.empty());
    CHECK(label.tokens.front() != kChannelChangeSym);
    CHECK(label.tokens.back() != kChannelChangeSym);
    for (std::size_t i = 1; i < label.tokens.size(); ++i)
      CHECK(!(label.tokens[i] == kChannelChangeSym &&
              label.tokens[i - 1] == kChannelChangeSym));
  }
}

TEST_CASE("serialize is deterministic") {
  const auto transcripts = testutil::fig1_transcripts();
  CHECK(join_tokens(serialize_tsot(transcripts).tokens) ==
        join_tokens(serialize_tsot(transcripts).tokens));
}

TEST_CASE("masked label for the first channel") {
  const TsotLabel label = serialize_tsot(testutil::fig1_transcripts());
  const MaskedLabel masked = make_masked_label(label, 0);
  CHECK(masked.start_symbol == kS1Sym);
  CHECK(join_tokens(masked.tokens) ==
        "hello how <mask> <mask> <mask> are <mask> <mask> <mask> you <mask> "
        "<mask>");
  CHECK(masked.tokens.size() == label.tokens.size());

  const MaskedLabel other = make_masked_label(label, 1);
  CHECK(other.start_symbol == kS2Sym);
  CHECK(join_tokens(other.tokens) ==
        "<mask> <mask> <mask> I <mask> <mask> <mask> am <mask> <mask> "
        "<mask> fine");
}

TEST_CASE("masking a single-speaker label changes nothing") {
  SpeakerTranscript t{5, {{"a", 0.0, 5}, {"b", 1.0, 5}, {"c", 2.0, 5}}};
  const TsotLabel label = serialize_tsot({t});
  const MaskedLabel masked = make_masked_label(label, 5);
  CHECK(masked.start_symbol == kS1Sym);
  CHECK(masked.tokens == label.tokens);
}

TEST_CASE("masking an absent speaker is an error") {
  const TsotLabel label = serialize_tsot(testutil::fig1_transcripts());
  CHECK_THROWS_AS(make_masked_label(label, 9), std::invalid_argument);
}

TEST_CASE("start symbol follows the channel order, not the speaker index") {
  // speaker 1 talks first, so it owns <s1s>
  SpeakerTranscript s0{0, {{"late", 2.0, 0}}};
  SpeakerTranscript s1{1, {{"early", 1.0, 1}}};
  const TsotLabel label = serialize_tsot({s0, s1});
  CHECK(make_masked_label(label, 1).start_symbol == kS1Sym);
  CHECK(make_masked_label(label, 0).start_symbol == kS2Sym);
}

TEST_CASE("masked labels partition the non-<cc> positions") {
  sasot::Rng rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    const auto transcripts = testutil::random_transcript_pair(rng);
    const TsotLabel label = serialize_tsot(transcripts);
    const MaskedLabel m0 = make_masked_label(label, 0);
    const MaskedLabel m1 = make_masked_label(label, 1);
    REQUIRE(m0.tokens.size() == label.tokens.size());
    REQUIRE(m1.tokens.size() == label.tokens.size());
    for (std::size_t i = 0; i < label.tokens.size(); ++i) {
      const bool kept0 = m0.tokens[i] != kMaskSym;
      const bool kept1 = m1.tokens[i] != kMaskSym;
      const bool is_cc = label.tokens[i] == kChannelChangeSym;
      CHECK(!(kept0 && kept1));         // disjoint
      CHECK((kept0 || kept1) == !is_cc);  // union is the non-<cc> set
      if (kept0) CHECK(m0.tokens[i] == label.tokens[i]);
      if (kept1) CHECK(m1.tokens[i] == label.tokens[i]);
    }
  }
}

TEST_CASE("tsot_from_tokens assigns toggled channel roles") {
  const TsotLabel label =
      tsot_from_tokens(split_tokens("a b <cc> c <cc> d"));
  CHECK(label.provenance ==
        std::vector<int>{0, 0, kChannelChange, 1, kChannelChange, 0});
}

TEST_CASE("split_tokens and join_tokens invert each other") {
  const std::string text = "hello <cc> world";
  CHECK(join_tokens(split_tokens(text)) == text);
  CHECK(split_tokens("  a   b ") == std::vector<std::string>{"a", "b"});
}
