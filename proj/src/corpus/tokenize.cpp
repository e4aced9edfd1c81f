#include <cctype>
#include <fstream>
#include <sstream>

#include "biaslab/corpus.hpp"

namespace biaslab::corpus {

namespace {

// Returns the offset of the first byte that starts an invalid UTF-8
// sequence, or npos.
std::size_t find_invalid_utf8(std::string_view text) {
  const auto* s = reinterpret_cast<const unsigned char*>(text.data());
  const std::size_t n = text.size();
  std::size_t i = 0;
  while (i < n) {
    const unsigned char c = s[i];
    std::size_t len = 0;
    std::uint32_t cp = 0;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return i;
    }
    if (i + len > n) return i;
    for (std::size_t k = 1; k < len; ++k) {
      if ((s[i + k] & 0xC0) != 0x80) return i;
      cp = (cp << 6) | (s[i + k] & 0x3F);
    }
    // overlong forms, surrogates, out of range
    if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000) ||
        (cp >= 0xD800 && cp <= 0xDFFF) || cp > 0x10FFFF) {
      return i;
    }
    i += len;
  }
  return std::string_view::npos;
}

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f';
}

}  // namespace

Scheme parse_scheme(std::string_view name) {
  if (name == "ptb") return Scheme::Ptb;
  if (name == "wikitext" || name == "wikitext2") return Scheme::WikiText;
  if (name == "cnn_dailymail" || name == "cnn") return Scheme::CnnDailyMail;
  if (name == "raw" || name == "custom") return Scheme::Raw;
  throw InputError("unknown preprocessing scheme '" + std::string(name) + "'");
}

std::string_view scheme_name(Scheme scheme) {
  switch (scheme) {
    case Scheme::Ptb: return "ptb";
    case Scheme::WikiText: return "wikitext";
    case Scheme::CnnDailyMail: return "cnn_dailymail";
    case Scheme::Raw: return "raw";
  }
  return "raw";
}

std::vector<std::string> tokenize(std::string_view raw_text, Scheme scheme) {
  if (raw_text.empty()) throw IngestError("empty input", 0);
  if (auto bad = find_invalid_utf8(raw_text); bad != std::string_view::npos) {
    throw IngestError("invalid UTF-8 at byte offset " + std::to_string(bad), bad);
  }
  const bool lowercase = scheme == Scheme::Ptb;
  const bool eos_per_line = scheme != Scheme::Raw;

  std::vector<std::string> tokens;
  std::string current;
  std::size_t line_start = 0;  // index in `tokens` where the current line begins
  auto flush = [&] {
    if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  };
  for (char ch : raw_text) {
    if (ch == '\n') {
      flush();
      if (eos_per_line) tokens.emplace_back(kEosToken);
      line_start = tokens.size();
    } else if (is_space(ch)) {
      flush();
    } else {
      current.push_back(lowercase ? static_cast<char>(std::tolower(static_cast<unsigned char>(ch))) : ch);
    }
  }
  flush();
  // An unterminated last line still ends a sentence.
  if (eos_per_line && tokens.size() > line_start) {
    tokens.emplace_back(kEosToken);
  }
  if (tokens.empty()) throw IngestError("input contains no tokens", 0);
  return tokens;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<std::string> read_tokens(const std::filesystem::path& path, Scheme scheme) {
  const std::string text = read_text_file(path);
  try {
    return tokenize(text, scheme);
  } catch (const IngestError& e) {
    throw IngestError(path.string() + ": " + e.what(), e.byte_offset());
  }
}

}  // namespace biaslab::corpus
