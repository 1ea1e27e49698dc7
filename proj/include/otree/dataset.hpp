#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace otree {

enum class ColumnKind { Numeric, Categorical, Ordinal };

inline const char* to_string(ColumnKind k) {
    switch (k) {
        case ColumnKind::Numeric:     return "numeric";
        case ColumnKind::Categorical: return "categorical";
        case ColumnKind::Ordinal:     return "ordinal";
    }
    return "?";
}

/*  One typed column. Numeric columns store values with NaN as the missing
 *  marker; categorical/ordinal columns store level codes with -1 as missing.
 *  Level codes index into `levels`; for ordinal columns the level order is the
 *  declared total order.
 */
struct Column {
    std::string name;
    ColumnKind kind = ColumnKind::Numeric;
    std::vector<double> values;       // numeric only
    std::vector<int> codes;           // categorical/ordinal only
    std::vector<std::string> levels;  // categorical/ordinal only

    bool is_numeric() const { return kind == ColumnKind::Numeric; }
    std::size_t size() const { return is_numeric() ? values.size() : codes.size(); }

    bool is_missing(std::size_t row) const {
        return is_numeric() ? std::isnan(values[row]) : codes[row] < 0;
    }

    std::size_t n_nonmissing() const {
        std::size_t n = 0;
        for (std::size_t r = 0; r < size(); r++) n += !is_missing(r);
        return n;
    }

    // Binary categorical columns are split like ordered columns.
    bool splits_as_ordered() const {
        return kind == ColumnKind::Numeric || kind == ColumnKind::Ordinal || levels.size() == 2;
    }

    // Numeric view of the predictor for threshold splits: the value itself, or
    // the level rank for categorical/ordinal columns routed through the
    // ordered-split path. NaN when missing.
    double ordered_value(std::size_t row) const {
        if (is_numeric()) return values[row];
        return codes[row] < 0 ? std::numeric_limits<double>::quiet_NaN() : double(codes[row]);
    }
};

struct Dataset {
    std::vector<Column> columns;
    std::size_t n_rows = 0;
    std::vector<std::string> row_ids;  // default: 1-based row index

    const Column* find(const std::string& name) const {
        for (const Column& c : columns)
            if (c.name == name) return &c;
        return nullptr;
    }

    std::optional<std::size_t> col_index(const std::string& name) const {
        for (std::size_t i = 0; i < columns.size(); i++)
            if (columns[i].name == name) return i;
        return std::nullopt;
    }

    void default_row_ids() {
        row_ids.resize(n_rows);
        for (std::size_t r = 0; r < n_rows; r++) row_ids[r] = std::to_string(r + 1);
    }
};

/*  Explicit per-column type declarations. Ordinal columns must declare their
 *  level order; categorical declarations may pre-seed the level list (used when
 *  scoring against a fitted schema so codes stay aligned).
 */
struct SchemaSpec {
    struct Entry {
        ColumnKind kind = ColumnKind::Categorical;
        std::vector<std::string> levels;  // required order for ordinals, optional seed otherwise
    };
    std::map<std::string, Entry> by_name;

    bool empty() const { return by_name.empty(); }
    const Entry* find(const std::string& name) const {
        auto it = by_name.find(name);
        return it == by_name.end() ? nullptr : &it->second;
    }
};

struct CsvOptions {
    std::vector<std::string> missing_tokens = {"", "na", "nan", "?"};  // matched case-insensitively
    // When true, tokens outside a declared level list are appended as new
    // levels instead of raising errors (scoring new data against a schema).
    bool allow_new_levels = false;
};

namespace detail {

inline std::string lower(std::string s) {
    for (char& c : s) c = char(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

inline bool is_missing_token(const std::string& tok, const CsvOptions& opt) {
    const std::string low = lower(tok);
    for (const std::string& m : opt.missing_tokens)
        if (low == lower(m)) return true;
    return false;
}

inline std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t')) b++;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t')) e--;
    return s.substr(b, e - b);
}

// Parses a full token as a finite double. Returns nullopt for non-numeric
// tokens; throws on numbers the double range cannot hold.
inline std::optional<double> parse_real(const std::string& tok) {
    const char* b = tok.data();
    const char* e = tok.data() + tok.size();
    if (b != e && *b == '+') b++;  // from_chars rejects a leading '+'
    if (b == e) return std::nullopt;
    double v = 0.0;
    auto res = std::from_chars(b, e, v);
    if (res.ptr != e) return std::nullopt;
    if (res.ec == std::errc::result_out_of_range || !std::isfinite(v))
        throw std::runtime_error("numeric value out of range: '" + tok + "'");
    return v;
}

// RFC-4180 record reader: handles quoted fields, doubled quotes and CRLF.
// Returns false at end of input.
inline bool read_record(std::istream& in, std::vector<std::string>& fields) {
    fields.clear();
    int ch = in.get();
    if (ch == std::char_traits<char>::eof()) return false;
    std::string field;
    bool quoted = false, was_quoted = false, any = false;
    auto push = [&]() {
        fields.push_back(was_quoted ? field : trim(field));
        field.clear();
        was_quoted = false;
    };
    while (true) {
        if (ch == std::char_traits<char>::eof()) {
            if (quoted) throw std::runtime_error("csv: unterminated quoted field");
            push();
            return true;
        }
        char c = char(ch);
        if (quoted) {
            if (c == '"') {
                if (in.peek() == '"') { field.push_back('"'); in.get(); }
                else quoted = false;
            } else {
                field.push_back(c);
            }
        } else if (c == '"' && field.empty() && !any) {
            quoted = true;
            was_quoted = true;
        } else if (c == ',') {
            push();
            any = false;
            ch = in.get();
            continue;
        } else if (c == '\n') {
            push();
            return true;
        } else if (c == '\r') {
            if (in.peek() == '\n') in.get();
            push();
            return true;
        } else {
            field.push_back(c);
        }
        any = true;
        ch = in.get();
    }
}

}  // namespace detail

/*  Type inference for a column of raw tokens: numeric iff every non-missing
 *  token parses as a real; otherwise categorical. Ordinal is never inferred,
 *  only declared. Throws when the column is entirely missing.
 */
inline ColumnKind infer_schema(const std::vector<std::string>& tokens, const CsvOptions& opt = {}) {
    bool seen = false;
    bool numeric = true;
    for (const std::string& tok : tokens) {
        if (detail::is_missing_token(tok, opt)) continue;
        seen = true;
        if (numeric && !detail::parse_real(tok).has_value()) numeric = false;
    }
    if (!seen) throw std::runtime_error("column has no non-missing values, nothing to analyze");
    return numeric ? ColumnKind::Numeric : ColumnKind::Categorical;
}

/*  CSV ingestion (RFC-4180, header row required). Columns are typed per the
 *  explicit schema where given, otherwise inferred. Ragged rows and schema
 *  entries naming unknown columns are hard errors.
 */
inline Dataset parse_csv(std::istream& in, const SchemaSpec* schema = nullptr, const CsvOptions& opt = {}) {
    std::vector<std::string> header;
    if (!detail::read_record(in, header) || (header.size() == 1 && header[0].empty()))
        throw std::runtime_error("csv: missing header row");
    {
        std::map<std::string, int> seen;
        for (const std::string& h : header)
            if (++seen[h] > 1) throw std::runtime_error("csv: duplicate column name '" + h + "'");
    }
    if (schema) {
        for (const auto& [name, entry] : schema->by_name) {
            (void)entry;
            if (std::find(header.begin(), header.end(), name) == header.end())
                throw std::runtime_error("schema names unknown column '" + name + "'");
        }
    }

    std::vector<std::vector<std::string>> cells(header.size());
    std::vector<std::string> rec;
    std::size_t n_rows = 0;
    while (detail::read_record(in, rec)) {
        if (rec.size() == 1 && rec[0].empty()) continue;  // blank trailing line
        n_rows++;
        if (rec.size() != header.size())
            throw std::runtime_error("csv: row " + std::to_string(n_rows) + " has " +
                                     std::to_string(rec.size()) + " fields, expected " +
                                     std::to_string(header.size()));
        for (std::size_t c = 0; c < header.size(); c++) cells[c].push_back(std::move(rec[c]));
    }
    if (n_rows == 0) throw std::runtime_error("csv: no data rows");

    Dataset ds;
    ds.n_rows = n_rows;
    ds.columns.resize(header.size());
    for (std::size_t c = 0; c < header.size(); c++) {
        Column& col = ds.columns[c];
        col.name = header[c];
        const SchemaSpec::Entry* entry = schema ? schema->find(col.name) : nullptr;
        col.kind = entry ? entry->kind : infer_schema(cells[c], opt);

        if (col.kind == ColumnKind::Numeric) {
            col.values.resize(n_rows);
            for (std::size_t r = 0; r < n_rows; r++) {
                const std::string& tok = cells[c][r];
                if (detail::is_missing_token(tok, opt)) {
                    col.values[r] = std::numeric_limits<double>::quiet_NaN();
                    continue;
                }
                std::optional<double> v;
                try {
                    v = detail::parse_real(tok);
                } catch (const std::exception& ex) {
                    throw std::runtime_error("column '" + col.name + "', row " + std::to_string(r + 1) +
                                             ": " + ex.what());
                }
                if (!v)
                    throw std::runtime_error("column '" + col.name + "', row " + std::to_string(r + 1) +
                                             ": cannot parse '" + tok + "' as numeric");
                col.values[r] = *v;
            }
        } else {
            col.levels = entry ? entry->levels : std::vector<std::string>{};
            const std::size_t n_declared = col.levels.size();
            std::unordered_map<std::string, int> code_of;
            for (std::size_t i = 0; i < col.levels.size(); i++) code_of[col.levels[i]] = int(i);
            col.codes.resize(n_rows);
            bool seen = false;
            for (std::size_t r = 0; r < n_rows; r++) {
                const std::string& tok = cells[c][r];
                if (detail::is_missing_token(tok, opt)) {
                    col.codes[r] = -1;
                    continue;
                }
                seen = true;
                auto it = code_of.find(tok);
                if (it == code_of.end()) {
                    if (n_declared > 0 && !opt.allow_new_levels)
                        throw std::runtime_error("column '" + col.name + "', row " + std::to_string(r + 1) +
                                                 ": level '" + tok + "' is not in the declared level list");
                    it = code_of.emplace(tok, int(col.levels.size())).first;
                    col.levels.push_back(tok);
                }
                col.codes[r] = it->second;
            }
            if (!seen)
                throw std::runtime_error("column '" + col.name + "' has no non-missing values, nothing to analyze");
        }
    }
    ds.default_row_ids();
    return ds;
}

/*  Canonical CSV writer: shortest round-trip representation for numerics,
 *  empty fields for missing values, RFC-4180 quoting where required.
 */
inline void write_csv(const Dataset& ds, std::ostream& out) {
    auto quote_if_needed = [](const std::string& s) -> std::string {
        bool need = s.find_first_of(",\"\n\r") != std::string::npos ||
                    (!s.empty() && (s.front() == ' ' || s.back() == ' '));
        if (!need) return s;
        std::string q = "\"";
        for (char c : s) {
            if (c == '"') q += "\"\"";
            else q.push_back(c);
        }
        q.push_back('"');
        return q;
    };
    for (std::size_t c = 0; c < ds.columns.size(); c++) {
        if (c) out.put(',');
        out << quote_if_needed(ds.columns[c].name);
    }
    out.put('\n');
    char buf[64];
    for (std::size_t r = 0; r < ds.n_rows; r++) {
        for (std::size_t c = 0; c < ds.columns.size(); c++) {
            if (c) out.put(',');
            const Column& col = ds.columns[c];
            if (col.is_missing(r)) continue;
            if (col.is_numeric()) {
                auto res = std::to_chars(buf, buf + sizeof(buf), col.values[r]);
                out.write(buf, res.ptr - buf);
            } else {
                out << quote_if_needed(col.levels[col.codes[r]]);
            }
        }
        out.put('\n');
    }
}

/*  Schema file: one line per column, `name:kind` with kind in
 *  {numeric, categorical, ordinal}; ordinals append `:level1<level2<...`.
 *  Blank lines and lines starting with '#' are ignored.
 */
inline SchemaSpec parse_schema_file(std::istream& in) {
    SchemaSpec spec;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        line_no++;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        auto fail = [&](const std::string& msg) {
            throw std::runtime_error("schema line " + std::to_string(line_no) + ": " + msg);
        };
        std::size_t p1 = t.find(':');
        if (p1 == std::string::npos) fail("expected 'name:kind'");
        std::string name = detail::trim(t.substr(0, p1));
        std::size_t p2 = t.find(':', p1 + 1);
        std::string kind_str = detail::lower(detail::trim(
            p2 == std::string::npos ? t.substr(p1 + 1) : t.substr(p1 + 1, p2 - p1 - 1)));
        SchemaSpec::Entry entry;
        if (kind_str == "numeric") entry.kind = ColumnKind::Numeric;
        else if (kind_str == "categorical") entry.kind = ColumnKind::Categorical;
        else if (kind_str == "ordinal") entry.kind = ColumnKind::Ordinal;
        else fail("unknown kind '" + kind_str + "'");
        if (entry.kind == ColumnKind::Ordinal) {
            if (p2 == std::string::npos) fail("ordinal column '" + name + "' needs an explicit level order");
            std::string rest = t.substr(p2 + 1);
            std::size_t pos = 0;
            while (pos <= rest.size()) {
                std::size_t nxt = rest.find('<', pos);
                std::string lev = detail::trim(nxt == std::string::npos ? rest.substr(pos)
                                                                        : rest.substr(pos, nxt - pos));
                if (lev.empty()) fail("empty ordinal level");
                entry.levels.push_back(lev);
                if (nxt == std::string::npos) break;
                pos = nxt + 1;
            }
            if (entry.levels.size() < 2) fail("ordinal column '" + name + "' needs at least 2 levels");
        } else if (p2 != std::string::npos) {
            fail("level lists are only valid for ordinal columns");
        }
        if (!spec.by_name.emplace(name, std::move(entry)).second)
            fail("duplicate declaration for column '" + name + "'");
    }
    return spec;
}

}  // namespace otree
