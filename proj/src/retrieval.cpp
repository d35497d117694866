#include "snnhash/retrieval.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace snnhash {

std::span<const std::uint8_t> CodeIndex::code(std::size_t item) const {
  if (item >= size()) throw std::out_of_range("code index: item " + std::to_string(item) + " out of range");
  return std::span<const std::uint8_t>(packed).subspan(item * bytes_per_code(), bytes_per_code());
}

CodeIndex CodeIndex::from_bits(std::span<const float> bits, std::size_t items, int length, std::vector<int> labels) {
  if (length < 1) throw std::invalid_argument("code index: bit length must be positive");
  if (bits.size() != items * static_cast<std::size_t>(length) || labels.size() != items) {
    throw std::invalid_argument("code index: " + std::to_string(bits.size()) + " bits and " +
                                std::to_string(labels.size()) + " labels for " + std::to_string(items) + " items of " +
                                std::to_string(length) + " bits");
  }
  CodeIndex idx;
  idx.bits = length;
  idx.labels = std::move(labels);
  const std::size_t row = idx.bytes_per_code();
  idx.packed.assign(items * row, 0);
  for (std::size_t k = 0; k < items; ++k) {
    for (std::size_t i = 0; i < static_cast<std::size_t>(length); ++i) {
      const float b = bits[k * static_cast<std::size_t>(length) + i];
      if (b != 0.0f && b != 1.0f) throw std::invalid_argument("code index: non-binary bit");
      if (b == 1.0f) idx.packed[k * row + i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
    }
  }
  return idx;
}

int hamming_distance(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  if (a.size() != b.size()) throw std::invalid_argument("hamming: code lengths differ");
  int d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += std::popcount(static_cast<unsigned>(a[i] ^ b[i]));
  return d;
}

std::vector<Ranked> hamming_rank(std::span<const std::uint8_t> query, int bits, const CodeIndex& index, std::size_t n) {
  if (bits != index.bits) {
    throw std::invalid_argument("hamming_rank: query has " + std::to_string(bits) + " bits, index has " +
                                std::to_string(index.bits));
  }
  if (query.size() != index.bytes_per_code()) throw std::invalid_argument("hamming_rank: packed query size mismatch");
  if (n > index.size()) {
    throw std::invalid_argument("hamming_rank: n=" + std::to_string(n) + " exceeds database size " +
                                std::to_string(index.size()));
  }
  std::vector<Ranked> all(index.size());
  for (std::size_t k = 0; k < all.size(); ++k) all[k] = {k, hamming_distance(query, index.code(k))};
  auto less = [](const Ranked& a, const Ranked& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.item < b.item;
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end(), less);
  all.resize(n);
  return all;
}

double RelevanceSpec::operator()(int q, int i) const {
  if (q == i) return 1.0;
  for (const auto& [a, b] : similar) {
    if ((a == q && b == i) || (a == i && b == q)) return 0.5;
  }
  return 0.0;
}

double average_precision(std::span<const int> ranked_labels, int query_label, std::size_t total_relevant,
                         std::size_t n) {
  if (total_relevant == 0) throw std::invalid_argument("average_precision: no relevant items");
  const std::size_t upto = std::min(n, ranked_labels.size());
  double hits = 0, acc = 0;
  for (std::size_t k = 0; k < upto; ++k) {
    if (ranked_labels[k] == query_label) {
      hits += 1;
      acc += hits / static_cast<double>(k + 1);
    }
  }
  return acc / static_cast<double>(std::min(n, total_relevant));
}

double dcg_at(std::span<const double> rel, std::size_t n) {
  const std::size_t upto = std::min(n, rel.size());
  double d = 0;
  for (std::size_t i = 0; i < upto; ++i) d += i == 0 ? rel[0] : rel[i] / std::log2(static_cast<double>(i + 1));
  return d;
}

GainMetrics gain_metrics(std::span<const double> returned, std::span<const double> database, std::size_t n) {
  if (n < 1) throw std::invalid_argument("gain_metrics: n must be >= 1");
  GainMetrics g;
  const std::size_t upto = std::min(n, returned.size());
  double s = 0;
  for (std::size_t i = 0; i < upto; ++i) s += returned[i];
  g.acg = s / static_cast<double>(n);
  g.dcg = dcg_at(returned, n);
  std::vector<double> ideal(database.begin(), database.end());
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  const double idcg = dcg_at(ideal, n);
  if (idcg == 0.0) {
    g.idcg_zero = true;
    g.ndcg = 0.0;
  } else {
    g.ndcg = g.dcg / idcg;
  }
  return g;
}

RetrievalReport evaluate_retrieval(const CodeIndex& queries, const CodeIndex& database, std::size_t n,
                                   const RelevanceSpec& relevance) {
  if (queries.bits != database.bits) {
    throw std::invalid_argument("retrieval: query codes have " + std::to_string(queries.bits) +
                                " bits, database has " + std::to_string(database.bits));
  }
  RetrievalReport r;
  r.n = n;
  r.bits = database.bits;
  r.queries = queries.size();
  std::vector<double> db_rel(database.size());
  std::vector<int> ranked_labels;
  std::vector<double> returned;
  std::size_t idcg_zero = 0;
  // fixed accumulation order: query id ascending
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const int y = queries.labels[q];
    std::size_t same = 0;
    for (std::size_t k = 0; k < database.size(); ++k) {
      db_rel[k] = relevance(y, database.labels[k]);
      same += database.labels[k] == y;
    }
    auto ranked = hamming_rank(queries.code(q), queries.bits, database, n);
    ranked_labels.clear();
    returned.clear();
    for (const auto& e : ranked) {
      ranked_labels.push_back(database.labels[e.item]);
      returned.push_back(db_rel[e.item]);
    }
    if (same == 0) {
      r.diagnostics.push_back("query " + std::to_string(q) + " (class " + std::to_string(y) +
                              ") has no same-class database item; skipped for mAP");
    } else {
      r.map += average_precision(ranked_labels, y, same, n);
      ++r.map_queries;
    }
    auto g = gain_metrics(returned, db_rel, n);
    idcg_zero += g.idcg_zero;
    r.acg += g.acg;
    r.dcg += g.dcg;
    r.ndcg += g.ndcg;
  }
  if (r.map_queries) r.map /= static_cast<double>(r.map_queries);
  if (r.queries) {
    const double nq = static_cast<double>(r.queries);
    r.acg /= nq;
    r.dcg /= nq;
    r.ndcg /= nq;
  }
  if (idcg_zero) r.diagnostics.push_back(std::to_string(idcg_zero) + " queries had IDCG = 0; their NDCG counts as 0");
  return r;
}

nlohmann::json RetrievalReport::to_json() const {
  return {{"n", n},
          {"bits", bits},
          {"queries", queries},
          {"map_queries", map_queries},
          {"mAP", map},
          {"ACG", acg},
          {"DCG", dcg},
          {"NDCG", ndcg},
          {"diagnostics", diagnostics}};
}

std::string RetrievalReport::to_text() const {
  char buf[256];
  std::string out;
  std::snprintf(buf, sizeof buf, "%-8s %-8s %-10s %-10s %-10s %-10s\n", "bits", "n", "mAP", "ACG", "DCG", "NDCG");
  out += buf;
  std::snprintf(buf, sizeof buf, "%-8d %-8zu %-10.4f %-10.4f %-10.4f %-10.4f\n", bits, n, map, acg, dcg, ndcg);
  out += buf;
  return out;
}

}  // namespace snnhash
