#include "biaslab/corpus.hpp"
#include "biaslab/rng.hpp"

namespace biaslab::corpus {

TokenStream subsample(const TokenStream& stream, std::uint32_t factor, std::uint64_t seed) {
  if (factor == 0) throw InputError("subsample factor must be at least 1");
  if (factor == 1) return stream;

  Rng rng(seed);
  const double keep_probability = 1.0 / static_cast<double>(factor);
  const TokenId eos = stream.vocab().eos_id();
  const auto ids = stream.ids();

  std::vector<TokenId> kept;
  std::size_t begin = 0;
  while (begin < ids.size()) {
    std::size_t end = begin;
    while (end < ids.size() && ids[end] != eos) ++end;
    if (end < ids.size()) ++end;  // sentence includes its marker
    if (uniform01(rng) < keep_probability) {
      kept.insert(kept.end(), ids.begin() + static_cast<std::ptrdiff_t>(begin),
                  ids.begin() + static_cast<std::ptrdiff_t>(end));
    }
    begin = end;
  }
  if (kept.empty()) throw InputError("subsample produced an empty corpus");
  return TokenStream(stream.vocab_ptr(), std::move(kept), stream.source_name());
}

}  // namespace biaslab::corpus
