#include "climeco/table.hpp"

#include "climeco/stats.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace climeco {

namespace {

bool parse_double(std::string_view s, double& out) {
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
}

bool cell_is_missing(std::string_view s) {
    return s.empty() || s == "NA" || s == "na" || s == "nan" || s == "NaN";
}

// Splits one CSV record supporting double-quoted fields; multi-line fields
// are not supported (no data in this pipeline needs them).
std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

void write_csv_field(std::ostream& out, const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) {
        out << s;
        return;
    }
    out << '"';
    for (char c : s) {
        if (c == '"') out << "\"\"";
        else out << c;
    }
    out << '"';
}

} // namespace

std::string format_double(double v) {
    if (std::isnan(v)) return "";
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw std::runtime_error("format_double failed");
    return std::string(buf, ptr);
}

bool DataTable::has_column(const std::string& name) const {
    return index_.count(name) != 0;
}

bool DataTable::is_numeric(const std::string& name) const {
    return std::holds_alternative<NumericColumn>(find(name).data);
}

std::vector<std::string> DataTable::column_names() const {
    std::vector<std::string> names;
    names.reserve(columns_.size());
    for (const auto& c : columns_) names.push_back(c.name);
    return names;
}

DataTable::Column& DataTable::find(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no such column: " + name);
    return columns_[it->second];
}

const DataTable::Column& DataTable::find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no such column: " + name);
    return columns_[it->second];
}

DataTable::NumericColumn& DataTable::numeric(const std::string& name) {
    auto& col = find(name);
    if (!std::holds_alternative<NumericColumn>(col.data))
        throw std::invalid_argument("column is not numeric: " + name);
    return std::get<NumericColumn>(col.data);
}

const DataTable::NumericColumn& DataTable::numeric(const std::string& name) const {
    const auto& col = find(name);
    if (!std::holds_alternative<NumericColumn>(col.data))
        throw std::invalid_argument("column is not numeric: " + name);
    return std::get<NumericColumn>(col.data);
}

DataTable::StringColumn& DataTable::strings(const std::string& name) {
    auto& col = find(name);
    if (!std::holds_alternative<StringColumn>(col.data))
        throw std::invalid_argument("column is not string: " + name);
    return std::get<StringColumn>(col.data);
}

const DataTable::StringColumn& DataTable::strings(const std::string& name) const {
    const auto& col = find(name);
    if (!std::holds_alternative<StringColumn>(col.data))
        throw std::invalid_argument("column is not string: " + name);
    return std::get<StringColumn>(col.data);
}

DataTable::NumericColumn& DataTable::add_numeric(const std::string& name) {
    if (has_column(name)) {
        auto& col = numeric(name);
        std::fill(col.begin(), col.end(), kMissing);
        return col;
    }
    index_[name] = columns_.size();
    columns_.push_back({name, NumericColumn(n_rows_, kMissing)});
    return std::get<NumericColumn>(columns_.back().data);
}

DataTable::StringColumn& DataTable::add_string(const std::string& name) {
    if (has_column(name)) {
        auto& col = strings(name);
        std::fill(col.begin(), col.end(), std::string());
        return col;
    }
    index_[name] = columns_.size();
    columns_.push_back({name, StringColumn(n_rows_)});
    return std::get<StringColumn>(columns_.back().data);
}

void DataTable::drop_column(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) return;
    columns_.erase(columns_.begin() + static_cast<std::ptrdiff_t>(it->second));
    index_.clear();
    for (std::size_t i = 0; i < columns_.size(); ++i) index_[columns_[i].name] = i;
}

void DataTable::resize_rows(std::size_t n) {
    n_rows_ = n;
    for (auto& col : columns_) {
        if (auto* num = std::get_if<NumericColumn>(&col.data)) num->resize(n, kMissing);
        else std::get<StringColumn>(col.data).resize(n);
    }
}

DataTable DataTable::select_rows(std::span<const std::size_t> rows) const {
    DataTable out;
    out.n_rows_ = rows.size();
    for (const auto& col : columns_) {
        out.index_[col.name] = out.columns_.size();
        if (const auto* num = std::get_if<NumericColumn>(&col.data)) {
            NumericColumn v(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i) v[i] = (*num)[rows[i]];
            out.columns_.push_back({col.name, std::move(v)});
        } else {
            const auto& str = std::get<StringColumn>(col.data);
            StringColumn v(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i) v[i] = str[rows[i]];
            out.columns_.push_back({col.name, std::move(v)});
        }
    }
    return out;
}

std::vector<std::size_t> DataTable::order_by(const std::vector<std::string>& keys) const {
    std::vector<std::size_t> order(n_rows_);
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto less = [&](std::size_t a, std::size_t b) {
        for (const auto& key : keys) {
            const auto& col = find(key);
            if (const auto* num = std::get_if<NumericColumn>(&col.data)) {
                const double va = (*num)[a];
                const double vb = (*num)[b];
                // missing sorts last
                const bool ma = std::isnan(va), mb = std::isnan(vb);
                if (ma != mb) return mb;
                if (!ma && va != vb) return va < vb;
            } else {
                const auto& str = std::get<StringColumn>(col.data);
                if (str[a] != str[b]) return str[a] < str[b];
            }
        }
        return false;
    };
    std::stable_sort(order.begin(), order.end(), less);
    return order;
}

void DataTable::sort_by(const std::vector<std::string>& keys) {
    auto order = order_by(keys);
    *this = select_rows(order);
}

DataTable::Factor DataTable::factor(const std::string& column) const {
    Factor f;
    f.codes.resize(n_rows_, -1);
    const auto& col = find(column);
    if (const auto* num = std::get_if<NumericColumn>(&col.data)) {
        std::map<double, std::int32_t> levels;
        for (double v : *num)
            if (!std::isnan(v)) levels.emplace(v, 0);
        std::int32_t code = 0;
        for (auto& [v, c] : levels) {
            c = code++;
            f.levels.push_back(format_double(v));
        }
        for (std::size_t i = 0; i < num->size(); ++i)
            if (!std::isnan((*num)[i])) f.codes[i] = levels[(*num)[i]];
    } else {
        const auto& str = std::get<StringColumn>(col.data);
        std::map<std::string, std::int32_t> levels;
        for (const auto& s : str)
            if (!s.empty()) levels.emplace(s, 0);
        std::int32_t code = 0;
        for (auto& [s, c] : levels) {
            c = code++;
            f.levels.push_back(s);
        }
        for (std::size_t i = 0; i < str.size(); ++i)
            if (!str[i].empty()) f.codes[i] = levels[str[i]];
    }
    return f;
}

DataTable::Factor DataTable::factor_pair(const std::string& a, const std::string& b) const {
    const Factor fa = factor(a);
    const Factor fb = factor(b);
    Factor f;
    f.codes.resize(n_rows_, -1);
    std::map<std::pair<std::int32_t, std::int32_t>, std::int32_t> pairs;
    for (std::size_t i = 0; i < n_rows_; ++i)
        if (fa.codes[i] >= 0 && fb.codes[i] >= 0) pairs.emplace(std::pair(fa.codes[i], fb.codes[i]), 0);
    std::int32_t code = 0;
    for (auto& [key, c] : pairs) {
        c = code++;
        f.levels.push_back(fa.levels[static_cast<std::size_t>(key.first)] + "\x1f" +
                           fb.levels[static_cast<std::size_t>(key.second)]);
    }
    for (std::size_t i = 0; i < n_rows_; ++i)
        if (fa.codes[i] >= 0 && fb.codes[i] >= 0)
            f.codes[i] = pairs[std::pair(fa.codes[i], fb.codes[i])];
    return f;
}

std::uint64_t DataTable::content_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](std::string_view s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001b3ull;
        }
        h ^= 0x1f;
        h *= 0x100000001b3ull;
    };
    for (const auto& col : columns_) {
        mix(col.name);
        if (const auto* num = std::get_if<NumericColumn>(&col.data)) {
            for (double v : *num) mix(format_double(v));
        } else {
            for (const auto& s : std::get<StringColumn>(col.data)) mix(s);
        }
    }
    return h;
}

DataTable DataTable::read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open CSV file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty CSV file: " + path);
    const auto header = split_csv_line(line);
    if (header.empty()) throw std::runtime_error("CSV header has no columns: " + path);

    std::vector<std::vector<std::string>> cells(header.size());
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        if (line.empty() && in.eof()) break;
        auto fields = split_csv_line(line);
        if (fields.size() != header.size())
            throw std::runtime_error(path + ": row " + std::to_string(rows + 2) + " has " +
                                     std::to_string(fields.size()) + " fields, expected " +
                                     std::to_string(header.size()));
        for (std::size_t c = 0; c < header.size(); ++c) cells[c].push_back(std::move(fields[c]));
        ++rows;
    }

    DataTable out;
    out.n_rows_ = rows;
    for (std::size_t c = 0; c < header.size(); ++c) {
        bool numeric = true;
        double tmp;
        for (const auto& cell : cells[c]) {
            if (cell_is_missing(cell)) continue;
            if (!parse_double(cell, tmp)) {
                numeric = false;
                break;
            }
        }
        out.index_[header[c]] = out.columns_.size();
        if (numeric) {
            NumericColumn v(rows, kMissing);
            for (std::size_t i = 0; i < rows; ++i)
                if (!cell_is_missing(cells[c][i])) parse_double(cells[c][i], v[i]);
            out.columns_.push_back({header[c], std::move(v)});
        } else {
            StringColumn v(rows);
            for (std::size_t i = 0; i < rows; ++i)
                if (!cell_is_missing(cells[c][i])) v[i] = cells[c][i];
            out.columns_.push_back({header[c], std::move(v)});
        }
    }
    return out;
}

void DataTable::write_csv(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    for (std::size_t c = 0; c < columns_.size(); ++c) {
        if (c) out << ',';
        write_csv_field(out, columns_[c].name);
    }
    out << '\n';
    for (std::size_t i = 0; i < n_rows_; ++i) {
        for (std::size_t c = 0; c < columns_.size(); ++c) {
            if (c) out << ',';
            if (const auto* num = std::get_if<NumericColumn>(&columns_[c].data)) {
                out << format_double((*num)[i]);
            } else {
                write_csv_field(out, std::get<StringColumn>(columns_[c].data)[i]);
            }
        }
        out << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

} // namespace climeco
