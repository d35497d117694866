#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace snnhash {

// Packed binary codes plus labels. Bit i of item k sits in byte i/8 at
// position i%8 of that item's row.
struct CodeIndex {
  int bits = 0;
  std::vector<std::uint8_t> packed;
  std::vector<int> labels;

  std::size_t bytes_per_code() const { return static_cast<std::size_t>((bits + 7) / 8); }
  std::size_t size() const { return labels.size(); }
  std::span<const std::uint8_t> code(std::size_t item) const;

  // bits: [M, L] row-major over {0, 1}
  static CodeIndex from_bits(std::span<const float> bits, std::size_t items, int length, std::vector<int> labels);
};

int hamming_distance(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

struct Ranked {
  std::size_t item = 0;
  int distance = 0;
};

// Ascending distance, ties by ascending item id; the first n entries.
std::vector<Ranked> hamming_rank(std::span<const std::uint8_t> query, int bits, const CodeIndex& index, std::size_t n);

// Graded relevance: same class 1, a listed similar class 0.5, else 0.
struct RelevanceSpec {
  std::vector<std::pair<int, int>> similar;  // unordered class pairs

  double operator()(int query_label, int item_label) const;
};

// AP over the first n ranks, normalized by min(n, total_relevant).
double average_precision(std::span<const int> ranked_labels, int query_label, std::size_t total_relevant, std::size_t n);

struct GainMetrics {
  double acg = 0, dcg = 0, ndcg = 0;
  bool idcg_zero = false;
};

// DCG@n = r_1 + sum_{i=2..n} r_i / log2(i)
double dcg_at(std::span<const double> relevances, std::size_t n);

// returned: relevances in ranked order; database: every item's relevance to
// this query (the ideal window is drawn from it).
GainMetrics gain_metrics(std::span<const double> returned, std::span<const double> database, std::size_t n);

struct RetrievalReport {
  std::size_t n = 0;
  int bits = 0;
  std::size_t queries = 0;
  std::size_t map_queries = 0;  // queries that had at least one relevant item
  double map = 0, acg = 0, dcg = 0, ndcg = 0;
  std::vector<std::string> diagnostics;

  nlohmann::json to_json() const;
  std::string to_text() const;
};

RetrievalReport evaluate_retrieval(const CodeIndex& queries, const CodeIndex& database, std::size_t n,
                                   const RelevanceSpec& relevance = {});

}  // namespace snnhash
