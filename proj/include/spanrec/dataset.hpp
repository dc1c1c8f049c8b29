#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "spanrec/common.hpp"

namespace spanrec {

// One rating event as it appears in the input file (raw identifiers).
struct RatingRecord {
    std::int64_t user_id = 0;
    std::int64_t item_id = 0;
    std::int64_t category_id = 0;
    double rating = 0.0;
    std::int64_t timestamp = 0;

    bool operator==(const RatingRecord&) const = default;
};

// Directed social link (raw identifiers).
struct TrustRecord {
    std::int64_t truster = 0;
    std::int64_t trustee = 0;

    bool operator==(const TrustRecord&) const = default;
};

// Bidirectional raw-id <-> contiguous-index map.
class IdIndex {
public:
    int intern(std::int64_t raw) {
        auto [it, inserted] = to_index_.try_emplace(raw, static_cast<int>(to_raw_.size()));
        if (inserted) to_raw_.push_back(raw);
        return it->second;
    }
    std::optional<int> find(std::int64_t raw) const {
        auto it = to_index_.find(raw);
        if (it == to_index_.end()) return std::nullopt;
        return it->second;
    }
    std::int64_t raw_of(int index) const { return to_raw_.at(static_cast<std::size_t>(index)); }
    int size() const { return static_cast<int>(to_raw_.size()); }
    const std::vector<std::int64_t>& raw_ids() const { return to_raw_; }

private:
    std::unordered_map<std::int64_t, int> to_index_;
    std::vector<std::int64_t> to_raw_;
};

// Rating re-expressed in contiguous indices; this is what graph and training consume.
struct IndexedRating {
    int user = 0;
    int item = 0;
    int category = 0;
    double rating = 0.0;
    std::int64_t timestamp = 0;

    bool operator==(const IndexedRating&) const = default;
};

struct IndexedTrust {
    int truster = 0;
    int trustee = 0;

    bool operator==(const IndexedTrust&) const = default;
};

struct Dataset {
    std::vector<IndexedRating> ratings;  // file order
    std::vector<IndexedTrust> trusts;    // deduplicated, directed
    IdIndex user_index;
    IdIndex item_index;
    IdIndex category_index;
    std::vector<int> category_of;  // item index -> category index

    int num_users() const { return user_index.size(); }
    int num_items() const { return item_index.size(); }
    int num_categories() const { return category_index.size(); }
    std::int64_t min_timestamp() const;
    std::int64_t max_timestamp() const;
    double mean_rating() const;
};

struct SplitSpec {
    double train_fraction = 0.8;
    double val_fraction = 0.1;
    double test_fraction = 0.1;
    std::uint64_t seed = 0;
};

struct Split {
    std::vector<IndexedRating> train;
    std::vector<IndexedRating> val;
    std::vector<IndexedRating> test;
};

// Ratings CSV: user,item,category,rating,timestamp. An optional header line is
// detected by a non-numeric first field. Throws ParseError with the line number
// on malformed lines, out-of-range ratings and non-integer timestamps.
std::vector<RatingRecord> parse_ratings(std::istream& in);

// Trust CSV: truster,trustee. Self-loops are rejected, duplicates dropped
// (first occurrence kept, order preserved).
std::vector<TrustRecord> parse_trust(std::istream& in);

void write_ratings_csv(const std::vector<RatingRecord>& records, std::ostream& out);
void write_trust_csv(const std::vector<TrustRecord>& records, std::ostream& out);

// Re-indexes users/items/categories contiguously from 0. Users appearing only
// in trust records get indices too. The item -> category map is total over
// rated items; the first category seen for an item wins.
Dataset build_dataset(const std::vector<RatingRecord>& ratings,
                      const std::vector<TrustRecord>& trusts);

// Seeded uniform-random partition of the rating records. Trust records are not
// split. Sizes are llround(fraction * n) with the remainder going to test.
Split split(const Dataset& dataset, const SplitSpec& spec);

// Table-style corpus counts: users, items, ratings, social, categories.
std::string dataset_summary_json(const Dataset& dataset);

}  // namespace spanrec
