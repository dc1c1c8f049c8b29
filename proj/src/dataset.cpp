#include "spanrec/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <set>

#include <json.hpp>

namespace spanrec {
namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            fields.push_back(trim(line.substr(start)));
            break;
        }
        fields.push_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
    return fields;
}

bool parse_i64(std::string_view s, std::int64_t& out) {
    const char* begin = s.data();
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    return ec == std::errc{} && ptr == end && !s.empty();
}

bool parse_f64(std::string_view s, double& out) {
    const char* begin = s.data();
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    return ec == std::errc{} && ptr == end && !s.empty();
}

bool looks_numeric(std::string_view s) {
    double ignored;
    return parse_f64(s, ignored);
}

}  // namespace

std::vector<RatingRecord> parse_ratings(std::istream& in) {
    std::vector<RatingRecord> records;
    std::string line;
    std::size_t lineno = 0;
    bool first_content_line = true;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string_view stripped = trim(line);
        if (stripped.empty()) continue;

        const auto fields = split_fields(stripped);
        if (first_content_line && !fields.empty() && !looks_numeric(fields[0])) {
            first_content_line = false;  // header
            continue;
        }
        first_content_line = false;

        if (fields.size() != 5)
            throw ParseError("expected 5 fields (user,item,category,rating,timestamp), got " +
                                 std::to_string(fields.size()),
                             lineno);
        RatingRecord rec;
        if (!parse_i64(fields[0], rec.user_id)) throw ParseError("invalid user id '" + std::string(fields[0]) + "'", lineno);
        if (!parse_i64(fields[1], rec.item_id)) throw ParseError("invalid item id '" + std::string(fields[1]) + "'", lineno);
        if (!parse_i64(fields[2], rec.category_id)) throw ParseError("invalid category id '" + std::string(fields[2]) + "'", lineno);
        if (!parse_f64(fields[3], rec.rating)) throw ParseError("invalid rating '" + std::string(fields[3]) + "'", lineno);
        if (!(rec.rating >= 1.0 && rec.rating <= 5.0))
            throw ParseError("rating out of range [1,5]: " + std::string(fields[3]), lineno);
        if (!parse_i64(fields[4], rec.timestamp))
            throw ParseError("non-integer timestamp '" + std::string(fields[4]) + "'", lineno);
        records.push_back(rec);
    }
    return records;
}

std::vector<TrustRecord> parse_trust(std::istream& in) {
    std::vector<TrustRecord> records;
    std::set<std::pair<std::int64_t, std::int64_t>> seen;
    std::string line;
    std::size_t lineno = 0;
    bool first_content_line = true;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string_view stripped = trim(line);
        if (stripped.empty()) continue;

        const auto fields = split_fields(stripped);
        if (first_content_line && !fields.empty() && !looks_numeric(fields[0])) {
            first_content_line = false;
            continue;
        }
        first_content_line = false;

        if (fields.size() != 2)
            throw ParseError("expected 2 fields (truster,trustee), got " + std::to_string(fields.size()),
                             lineno);
        TrustRecord rec;
        if (!parse_i64(fields[0], rec.truster)) throw ParseError("invalid truster id '" + std::string(fields[0]) + "'", lineno);
        if (!parse_i64(fields[1], rec.trustee)) throw ParseError("invalid trustee id '" + std::string(fields[1]) + "'", lineno);
        if (rec.truster == rec.trustee)
            throw ParseError("self-loop trust edge for user " + std::to_string(rec.truster), lineno);
        if (seen.emplace(rec.truster, rec.trustee).second) records.push_back(rec);
    }
    return records;
}

namespace {

std::string format_rating(double r) {
    // Integers as "4.0", everything else with round-trip precision.
    if (r == std::floor(r) && std::abs(r) < 1e15) {
        return std::to_string(static_cast<long long>(r)) + ".0";
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", r);
    return buf;
}

}  // namespace

void write_ratings_csv(const std::vector<RatingRecord>& records, std::ostream& out) {
    for (const auto& r : records) {
        out << r.user_id << ',' << r.item_id << ',' << r.category_id << ','
            << format_rating(r.rating) << ',' << r.timestamp << '\n';
    }
}

void write_trust_csv(const std::vector<TrustRecord>& records, std::ostream& out) {
    for (const auto& t : records) out << t.truster << ',' << t.trustee << '\n';
}

Dataset build_dataset(const std::vector<RatingRecord>& ratings,
                      const std::vector<TrustRecord>& trusts) {
    Dataset ds;
    ds.ratings.reserve(ratings.size());
    for (const auto& r : ratings) {
        IndexedRating ir;
        ir.user = ds.user_index.intern(r.user_id);
        ir.item = ds.item_index.intern(r.item_id);
        ir.category = ds.category_index.intern(r.category_id);
        ir.rating = r.rating;
        ir.timestamp = r.timestamp;
        if (ir.item == static_cast<int>(ds.category_of.size())) {
            ds.category_of.push_back(ir.category);
        }
        ds.ratings.push_back(ir);
    }
    ds.trusts.reserve(trusts.size());
    for (const auto& t : trusts) {
        IndexedTrust it;
        it.truster = ds.user_index.intern(t.truster);
        it.trustee = ds.user_index.intern(t.trustee);
        ds.trusts.push_back(it);
    }
    return ds;
}

std::int64_t Dataset::min_timestamp() const {
    std::int64_t m = std::numeric_limits<std::int64_t>::max();
    for (const auto& r : ratings) m = std::min(m, r.timestamp);
    return m;
}

std::int64_t Dataset::max_timestamp() const {
    std::int64_t m = std::numeric_limits<std::int64_t>::min();
    for (const auto& r : ratings) m = std::max(m, r.timestamp);
    return m;
}

double Dataset::mean_rating() const {
    if (ratings.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& r : ratings) acc += r.rating;
    return acc / static_cast<double>(ratings.size());
}

Split split(const Dataset& dataset, const SplitSpec& spec) {
    if (spec.train_fraction <= 0.0 || spec.val_fraction <= 0.0 || spec.test_fraction <= 0.0)
        throw ValidationError("split fractions must all be positive");
    const double sum = spec.train_fraction + spec.val_fraction + spec.test_fraction;
    if (std::abs(sum - 1.0) > 1e-9)
        throw ValidationError("split fractions must sum to 1, got " + std::to_string(sum));

    const std::size_t n = dataset.ratings.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(derive_seed(spec.seed, "split"));
    rng.shuffle(order);

    const auto dn = static_cast<double>(n);
    std::size_t n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * dn));
    std::size_t n_val = static_cast<std::size_t>(std::llround(spec.val_fraction * dn));
    n_train = std::min(n_train, n);
    n_val = std::min(n_val, n - n_train);

    // Records keep their file order inside each part.
    auto take = [&](std::size_t begin, std::size_t end) {
        std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                     order.begin() + static_cast<std::ptrdiff_t>(end));
        std::sort(idx.begin(), idx.end());
        std::vector<IndexedRating> part;
        part.reserve(idx.size());
        for (std::size_t i : idx) part.push_back(dataset.ratings[i]);
        return part;
    };

    Split out;
    out.train = take(0, n_train);
    out.val = take(n_train, n_train + n_val);
    out.test = take(n_train + n_val, n);
    return out;
}

std::string dataset_summary_json(const Dataset& dataset) {
    nlohmann::json j;
    j["users"] = dataset.num_users();
    j["items"] = dataset.num_items();
    j["ratings"] = dataset.ratings.size();
    j["social"] = dataset.trusts.size();
    j["categories"] = dataset.num_categories();
    return j.dump(2);
}

}  // namespace spanrec
