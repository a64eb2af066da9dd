#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

namespace climeco {

/// Column-oriented table of numeric (double, NaN = missing) and string
/// columns. Rows are kept aligned across columns; column order is insertion
/// order and preserved by CSV round trips.
class DataTable {
public:
    using NumericColumn = std::vector<double>;
    using StringColumn = std::vector<std::string>;

    /// Integer codes for a categorical view of a column. Levels are sorted
    /// (numerically for numeric columns), so codes do not depend on row order.
    struct Factor {
        std::vector<std::int32_t> codes; // -1 marks a missing value
        std::vector<std::string> levels;
        int n_levels() const { return static_cast<int>(levels.size()); }
    };

    std::size_t n_rows() const { return n_rows_; }
    std::size_t n_columns() const { return columns_.size(); }
    bool has_column(const std::string& name) const;
    bool is_numeric(const std::string& name) const;
    std::vector<std::string> column_names() const;

    NumericColumn& numeric(const std::string& name);
    const NumericColumn& numeric(const std::string& name) const;
    StringColumn& strings(const std::string& name);
    const StringColumn& strings(const std::string& name) const;

    // References returned by add_* stay valid across later column additions;
    // drop_column invalidates them.
    NumericColumn& add_numeric(const std::string& name);
    StringColumn& add_string(const std::string& name);
    void drop_column(const std::string& name);

    /// Appends one row given parallel spans over all columns; mostly for tests.
    void resize_rows(std::size_t n);

    DataTable select_rows(std::span<const std::size_t> rows) const;
    std::vector<std::size_t> order_by(const std::vector<std::string>& keys) const;
    void sort_by(const std::vector<std::string>& keys);

    Factor factor(const std::string& column) const;
    /// Interaction of two categoricals as a single factor (observed pairs only).
    Factor factor_pair(const std::string& a, const std::string& b) const;

    /// Content hash over column names and values; row-order sensitive.
    std::uint64_t content_hash() const;

    static DataTable read_csv(const std::string& path);
    void write_csv(const std::string& path) const;

private:
    struct Column {
        std::string name;
        std::variant<NumericColumn, StringColumn> data;
    };

    Column& find(const std::string& name);
    const Column& find(const std::string& name) const;

    std::deque<Column> columns_; // deque keeps element references stable on append
    std::unordered_map<std::string, std::size_t> index_;
    std::size_t n_rows_ = 0;
};

/// Round-trip-exact decimal rendering of a double (shortest form).
std::string format_double(double v);

} // namespace climeco
