#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace sasot::labels {

// Reserved symbols, fixed as literal strings. Label text is UTF-8 with
// space-separated tokens.
inline constexpr std::string_view kChannelChangeSym = "<cc>";
inline constexpr std::string_view kMaskSym = "<mask>";
inline constexpr std::string_view kSosSym = "<sos>";
inline constexpr std::string_view kS1Sym = "<s1s>";
inline constexpr std::string_view kS2Sym = "<s2s>";

bool is_reserved_symbol(std::string_view token);

// Provenance value marking a <cc> position.
inline constexpr int kChannelChange = -1;

// A transcript word with its emission time; the unit of serialization.
struct TimedWord {
  std::string text;
  double emit_time = 0.0;  // seconds
  int speaker = 0;
};

struct SpeakerTranscript {
  int speaker = 0;
  std::vector<TimedWord> words;  // sorted by emit_time ascending
};

// Serialized multi-talker token sequence. provenance[i] holds the speaker
// index of tokens[i], or kChannelChange where tokens[i] is <cc>.
struct TsotLabel {
  std::vector<std::string> tokens;
  std::vector<int> provenance;
};

// One speaker's view of a TsotLabel: every position that is not that
// speaker's token (including <cc>) is replaced by <mask>.
struct MaskedLabel {
  std::string start_symbol;  // <s1s> or <s2s>
  std::vector<std::string> tokens;
  int target_speaker = 0;
};

// Merge 1 or 2 transcripts chronologically, inserting <cc> between adjacent
// words of different speakers. Ties break by (emit_time, speaker) ascending.
TsotLabel serialize_tsot(const std::vector<SpeakerTranscript>& transcripts);

// Split a token stream into two channels: the channel index starts at 0 and
// toggles at each <cc>; <cc> tokens themselves are discarded. Malformed
// sequences (leading/trailing/double <cc>) are tolerated — every <cc> still
// toggles exactly once — because decoded hypotheses can be arbitrary.
std::pair<std::vector<std::string>, std::vector<std::string>> split_channels(
    const std::vector<std::string>& tokens);

std::pair<std::vector<std::string>, std::vector<std::string>>
deserialize_tsot(const TsotLabel& label);

MaskedLabel make_masked_label(const TsotLabel& label, int target_speaker);

// Distinct speakers in order of first appearance. Index 0 is the first
// channel (the speaker of the earliest token).
std::vector<int> channel_speakers(const TsotLabel& label);

// Rebuild a TsotLabel from bare tokens, e.g. a decoded hypothesis: provenance
// becomes the toggled channel index (0/1).
TsotLabel tsot_from_tokens(const std::vector<std::string>& tokens);

std::string join_tokens(const std::vector<std::string>& tokens);
std::vector<std::string> split_tokens(std::string_view text);

}  // namespace sasot::labels
