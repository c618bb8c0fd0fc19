#include "sasot/labels.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace sasot::labels {

bool is_reserved_symbol(std::string_view token) {
  return token == kChannelChangeSym || token == kMaskSym || token == kSosSym ||
         token == kS1Sym || token == kS2Sym;
}

namespace {

void validate_transcript(const SpeakerTranscript& t) {
  for (std::size_t i = 0; i < t.words.size(); ++i) {
    const TimedWord& w = t.words[i];
    if (w.text.empty())
      throw std::invalid_argument("invalid-transcript: empty word text");
    if (is_reserved_symbol(w.text))
      throw std::invalid_argument("invalid-transcript: word '" + w.text +
                                  "' is a reserved symbol");
    if (w.emit_time < 0.0)
      throw std::invalid_argument("invalid-transcript: negative emit_time for '" +
                                  w.text + "'");
    if (w.speaker != t.speaker)
      throw std::invalid_argument(
          "invalid-transcript: word speaker does not match transcript speaker");
    if (i > 0) {
      if (t.words[i - 1].emit_time > w.emit_time)
        throw std::invalid_argument(
            "invalid-transcript: words not sorted by emit_time");
      if (t.words[i - 1].emit_time == w.emit_time)
        throw std::invalid_argument(
            "invalid-transcript: two words share (emit_time, speaker)");
    }
  }
}

}  // namespace

TsotLabel serialize_tsot(const std::vector<SpeakerTranscript>& transcripts) {
  if (transcripts.empty() || transcripts.size() > 2)
    throw std::invalid_argument(
        "unsupported-speaker-count: expected 1 or 2 transcripts, got " +
        std::to_string(transcripts.size()));
  if (transcripts.size() == 2 &&
      transcripts[0].speaker == transcripts[1].speaker)
    throw std::invalid_argument(
        "invalid-transcript: both transcripts carry speaker index " +
        std::to_string(transcripts[0].speaker));
  for (const auto& t : transcripts) validate_transcript(t);

  std::vector<TimedWord> merged;
  for (const auto& t : transcripts)
    merged.insert(merged.end(), t.words.begin(), t.words.end());
  std::sort(merged.begin(), merged.end(),
            [](const TimedWord& a, const TimedWord& b) {
              if (a.emit_time != b.emit_time) return a.emit_time < b.emit_time;
              return a.speaker < b.speaker;
            });

  TsotLabel label;
  for (const TimedWord& w : merged) {
    if (!label.provenance.empty() && label.provenance.back() != w.speaker) {
      label.tokens.emplace_back(kChannelChangeSym);
      label.provenance.push_back(kChannelChange);
    }
    label.tokens.push_back(w.text);
    label.provenance.push_back(w.speaker);
  }
  return label;
}

std::pair<std::vector<std::string>, std::vector<std::string>> split_channels(
    const std::vector<std::string>& tokens) {
  std::pair<std::vector<std::string>, std::vector<std::string>> channels;
  int current = 0;
  for (const std::string& tok : tokens) {
    if (tok == kChannelChangeSym) {
      current ^= 1;
      continue;
    }
    (current == 0 ? channels.first : channels.second).push_back(tok);
  }
  return channels;
}

std::pair<std::vector<std::string>, std::vector<std::string>>
deserialize_tsot(const TsotLabel& label) {
  return split_channels(label.tokens);
}

std::vector<int> channel_speakers(const TsotLabel& label) {
  std::vector<int> speakers;
  for (int p : label.provenance) {
    if (p == kChannelChange) continue;
    if (std::find(speakers.begin(), speakers.end(), p) == speakers.end())
      speakers.push_back(p);
  }
  return speakers;
}

MaskedLabel make_masked_label(const TsotLabel& label, int target_speaker) {
  const std::vector<int> speakers = channel_speakers(label);
  const auto it = std::find(speakers.begin(), speakers.end(), target_speaker);
  if (it == speakers.end())
    throw std::invalid_argument("unknown-speaker: speaker " +
                                std::to_string(target_speaker) +
                                " does not appear in the label");
  MaskedLabel masked;
  masked.target_speaker = target_speaker;
  masked.start_symbol = (it == speakers.begin()) ? std::string(kS1Sym)
                                                 : std::string(kS2Sym);
  masked.tokens.reserve(label.tokens.size());
  for (std::size_t i = 0; i < label.tokens.size(); ++i) {
    if (label.provenance[i] == target_speaker)
      masked.tokens.push_back(label.tokens[i]);
    else
      masked.tokens.emplace_back(kMaskSym);  // other speakers and <cc>
  }
  return masked;
}

TsotLabel tsot_from_tokens(const std::vector<std::string>& tokens) {
  TsotLabel label;
  label.tokens = tokens;
  label.provenance.reserve(tokens.size());
  int current = 0;
  for (const std::string& tok : tokens) {
    if (tok == kChannelChangeSym) {
      label.provenance.push_back(kChannelChange);
      current ^= 1;
    } else {
      label.provenance.push_back(current);
    }
  }
  return label;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

std::vector<std::string> split_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::istringstream iss{std::string(text)};
  std::string tok;
  while (iss >> tok) tokens.push_back(tok);
  return tokens;
}

}  // namespace sasot::labels
