#include <cmath>
#include <thread>

#include "biaslab/biasmeter.hpp"

namespace biaslab::biasmeter {

ContextScheme ContextScheme::fixed(int radius) {
  if (radius < 1) throw InputError("fixed context radius must be >= 1");
  return ContextScheme(FixedContext{radius});
}

ContextScheme ContextScheme::exponential(double adjacent_weight, double decay) {
  if (!(adjacent_weight > 0.0 && adjacent_weight <= 1.0)) {
    throw InputError("exponential adjacent weight must lie in (0, 1]");
  }
  if (!(decay > 0.0 && decay < 1.0)) throw InputError("exponential decay must lie in (0, 1)");
  return ContextScheme(ExponentialContext{adjacent_weight, decay});
}

int ContextScheme::reach() const {
  if (is_fixed()) return as_fixed().radius;
  const auto& e = as_exponential();
  int d = 0;
  while (e.adjacent_weight * std::pow(e.decay, d) >= kExponentialCutoff) ++d;
  return d;
}

double ContextScheme::weight(int distance) const {
  if (distance < 1) return 0.0;
  if (is_fixed()) return distance <= as_fixed().radius ? 1.0 : 0.0;
  const auto& e = as_exponential();
  const double w = e.adjacent_weight * std::pow(e.decay, distance - 1);
  return w >= kExponentialCutoff ? w : 0.0;
}

std::string ContextScheme::name() const { return is_fixed() ? "fixed" : "exponential"; }

namespace {

enum class Role : unsigned char { Ignored, Target, Male, Female };

struct Partial {
  std::vector<double> cwf;
  std::vector<double> cwm;
};

void accumulate_range(std::span<const corpus::TokenId> ids, std::span<const Role> roles,
                      std::span<const std::size_t> gendered_positions,
                      std::span<const double> weights, Partial& out) {
  const auto n = static_cast<std::ptrdiff_t>(ids.size());
  const auto reach = static_cast<std::ptrdiff_t>(weights.size()) - 1;
  for (std::size_t p : gendered_positions) {
    const auto pos = static_cast<std::ptrdiff_t>(p);
    auto& cells = roles[static_cast<std::size_t>(ids[p])] == Role::Female ? out.cwf : out.cwm;
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, pos - reach);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n - 1, pos + reach);
    for (std::ptrdiff_t q = lo; q <= hi; ++q) {
      if (q == pos) continue;
      const auto id = static_cast<std::size_t>(ids[static_cast<std::size_t>(q)]);
      if (roles[id] != Role::Target) continue;
      cells[id] += weights[static_cast<std::size_t>(q > pos ? q - pos : pos - q)];
    }
  }
}

}  // namespace

CooccurrenceTable count_cooccurrences(const corpus::TokenStream& stream,
                                      const corpus::DefiningSets& sets,
                                      const corpus::StopWordList& stops,
                                      const ContextScheme& scheme, unsigned threads) {
  const auto& vocab = stream.vocab();
  const std::size_t v = vocab.size();

  std::vector<Role> roles(v, Role::Ignored);
  for (std::size_t id = 0; id < v; ++id) {
    const auto tid = static_cast<corpus::TokenId>(id);
    if (sets.is_female(tid)) {
      roles[id] = Role::Female;
    } else if (sets.is_male(tid)) {
      roles[id] = Role::Male;
    } else if (!vocab.is_special(tid) && !stops.contains(vocab.token(tid))) {
      roles[id] = Role::Target;
    }
  }

  CooccurrenceTable table;
  table.vocab = stream.vocab_ptr();
  table.scheme = scheme;
  table.cwf.assign(v, 0.0);
  table.cwm.assign(v, 0.0);
  table.target_count.assign(v, 0);
  table.is_target.assign(v, false);
  for (std::size_t id = 0; id < v; ++id) table.is_target[id] = roles[id] == Role::Target;

  const auto ids = stream.ids();
  std::vector<std::size_t> gendered;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto id = static_cast<std::size_t>(ids[i]);
    switch (roles[id]) {
      case Role::Target:
        ++table.target_count[id];
        ++table.total_targets;
        break;
      case Role::Male:
        ++table.cm;
        gendered.push_back(i);
        break;
      case Role::Female:
        ++table.cf;
        gendered.push_back(i);
        break;
      case Role::Ignored:
        break;
    }
  }

  const int reach = scheme.reach();
  std::vector<double> weights(static_cast<std::size_t>(reach) + 1, 0.0);
  for (int d = 1; d <= reach; ++d) weights[static_cast<std::size_t>(d)] = scheme.weight(d);

  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(gendered.size())));
  if (threads <= 1) {
    Partial all{std::move(table.cwf), std::move(table.cwm)};
    accumulate_range(ids, roles, gendered, weights, all);
    table.cwf = std::move(all.cwf);
    table.cwm = std::move(all.cwm);
  } else {
    std::vector<Partial> partials(threads, Partial{std::vector<double>(v, 0.0), std::vector<double>(v, 0.0)});
    std::vector<std::thread> workers;
    const std::size_t chunk = (gendered.size() + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      const std::size_t begin = std::min(gendered.size(), t * chunk);
      const std::size_t end = std::min(gendered.size(), begin + chunk);
      workers.emplace_back([&, t, begin, end] {
        accumulate_range(ids, roles, std::span<const std::size_t>(gendered).subspan(begin, end - begin),
                         weights, partials[t]);
      });
    }
    for (auto& w : workers) w.join();
    for (const auto& part : partials) {
      for (std::size_t id = 0; id < v; ++id) {
        table.cwf[id] += part.cwf[id];
        table.cwm[id] += part.cwm[id];
      }
    }
  }

  for (std::size_t id = 0; id < v; ++id) {
    table.sum_cwf += table.cwf[id];
    table.sum_cwm += table.cwm[id];
  }
  return table;
}

double conditional_probability(const CooccurrenceTable& table, corpus::TokenId w, Gender g) {
  const char* label = g == Gender::Female ? "f" : "m";
  const double cg = static_cast<double>(g == Gender::Female ? table.cf : table.cm);
  const double sum_cwg = g == Gender::Female ? table.sum_cwf : table.sum_cwm;
  if (cg == 0.0) {
    throw UndefinedProbability(std::string("P(w|g) undefined: c(") + label + ") is zero");
  }
  if (sum_cwg == 0.0) {
    throw UndefinedProbability(std::string("P(w|g) undefined: sum_i c(w_i,") + label + ") is zero");
  }
  if (table.total_targets == 0) {
    throw UndefinedProbability("P(w|g) undefined: sum_i c(w_i) is zero");
  }
  return (table.c(w, g) / sum_cwg) / (cg / static_cast<double>(table.total_targets));
}

}  // namespace biaslab::biasmeter
