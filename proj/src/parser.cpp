#include "kc/parser.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "kc/numerics.hpp"

namespace kc::lang {
namespace {

// ---------------------------------------------------------------------------
// Lexing
// ---------------------------------------------------------------------------

struct Token {
    enum Kind { Ident, Number, String, Punct, End };
    Kind kind = End;
    std::string text;
    double num = 0.0;
    int line = 1, col = 1;
};

bool ident_start(char c) {
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}
bool ident_cont(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' ||
           c == ':' || c == '.' || c == '-';
}

std::vector<Token> lex(const std::string& src) {
    std::vector<Token> out;
    int line = 1, col = 1;
    std::size_t i = 0;
    const std::size_t n = src.size();
    auto advance = [&](std::size_t k) {
        for (std::size_t j = 0; j < k; ++j) {
            if (src[i + j] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        i += k;
    };
    while (i < n) {
        const char c = src[i];
        if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
            advance(1);
            continue;
        }
        if (c == '#' || (c == '-' && i + 1 < n && src[i + 1] == '-')) {
            while (i < n && src[i] != '\n') advance(1);
            continue;
        }
        Token t;
        t.line = line;
        t.col = col;
        if (std::isdigit(static_cast<unsigned char>(c))) {
            std::size_t j = i;
            while (j < n && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
            if (j < n && src[j] == '.' && j + 1 < n &&
                std::isdigit(static_cast<unsigned char>(src[j + 1]))) {
                ++j;
                while (j < n && std::isdigit(static_cast<unsigned char>(src[j])))
                    ++j;
            }
            if (j < n && (src[j] == 'e' || src[j] == 'E')) {
                std::size_t k = j + 1;
                if (k < n && (src[k] == '+' || src[k] == '-')) ++k;
                if (k < n && std::isdigit(static_cast<unsigned char>(src[k]))) {
                    j = k;
                    while (j < n &&
                           std::isdigit(static_cast<unsigned char>(src[j])))
                        ++j;
                }
            }
            t.kind = Token::Number;
            t.text = src.substr(i, j - i);
            t.num = std::strtod(t.text.c_str(), nullptr);
            advance(j - i);
        } else if (ident_start(c)) {
            std::size_t j = i + 1;
            while (j < n && ident_cont(src[j])) ++j;
            t.kind = Token::Ident;
            t.text = src.substr(i, j - i);
            advance(j - i);
        } else if (c == '"') {
            std::size_t j = i + 1;
            while (j < n && src[j] != '"' && src[j] != '\n') ++j;
            if (j >= n || src[j] != '"')
                throw SyntaxError("unterminated string literal", line, col);
            t.kind = Token::String;
            t.text = src.substr(i + 1, j - i - 1);
            advance(j - i + 1);
        } else {
            t.kind = Token::Punct;
            t.text = std::string(1, c);
            advance(1);
        }
        out.push_back(std::move(t));
    }
    Token end;
    end.kind = Token::End;
    end.line = line;
    end.col = col;
    out.push_back(end);
    return out;
}

using Span = std::vector<Token>;

// Normalized text: tokens joined with single spaces, with no space before
// closing punctuation / separators and none after opening brackets. Lexing the
// result reproduces the same token sequence, which makes normalization a
// fixpoint and gives canonical serialization its round-trip property.
std::string detokenize(const Span& toks, std::size_t from, std::size_t to) {
    std::string out;
    for (std::size_t i = from; i < to; ++i) {
        const Token& t = toks[i];
        if (t.kind == Token::End) break;
        std::string piece =
            t.kind == Token::String ? "\"" + t.text + "\"" : t.text;
        if (!out.empty()) {
            const char prev = out.back();
            const bool no_space_before =
                t.kind == Token::Punct &&
                (t.text == "," || t.text == ")" || t.text == "}" ||
                 t.text == "]" || t.text == ";" || t.text == ":");
            const bool no_space_after =
                prev == '(' || prev == '{' || prev == '[';
            if (!no_space_before && !no_space_after) out += ' ';
        }
        out += piece;
    }
    return out;
}

std::string detokenize(const Span& toks) { return detokenize(toks, 0, toks.size()); }

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return s;
}

bool contains_word(const Span& toks, const std::string& w) {
    for (const auto& t : toks)
        if (t.kind == Token::Ident && lower(t.text) == w) return true;
    return false;
}

bool text_contains(const std::string& text, const std::string& needle) {
    return lower(text).find(lower(needle)) != std::string::npos;
}

// Shortest decimal form that round-trips through strtod.
std::string format_number(double v) {
    char buf[64];
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

// ---------------------------------------------------------------------------
// Clause splitting
// ---------------------------------------------------------------------------

const std::vector<std::string> kClauseKeywords = {
    "scope", "pre", "post", "tolerance", "reference", "measure", "violation"};

bool is_clause_keyword(const std::string& s) {
    return std::find(kClauseKeywords.begin(), kClauseKeywords.end(), s) !=
           kClauseKeywords.end();
}

struct Clause {
    std::string name;
    Span tokens;
    int line = 0, col = 0;
};

// The contract bodies use layout, not delimiters: a part keyword opens a
// clause only when it is the first token on its line at (or left of) the
// indentation column established by the first part keyword. Continuation
// lines are indented deeper, so prose containing words like "reference" does
// not terminate a clause.
std::vector<Clause> split_clauses(const Span& toks, std::size_t body_begin,
                                  std::size_t body_end) {
    std::vector<Clause> clauses;
    int clause_col = -1;
    bool inline_style = false;
    // Establish the clause column from the first keyword in the body.
    for (std::size_t i = body_begin; i < body_end; ++i) {
        const Token& t = toks[i];
        if (t.kind != Token::Ident || !is_clause_keyword(t.text)) continue;
        const bool first_on_line =
            i == 0 || toks[i - 1].line != t.line;
        clause_col = t.col;
        inline_style = !first_on_line && i != body_begin;
        break;
    }
    Clause current;
    for (std::size_t i = body_begin; i < body_end; ++i) {
        const Token& t = toks[i];
        bool opens = false;
        if (t.kind == Token::Ident && is_clause_keyword(t.text)) {
            if (inline_style) {
                opens = true;
            } else {
                const bool first_on_line =
                    i == body_begin || toks[i - 1].line != t.line;
                opens = (first_on_line || i == body_begin) &&
                        (clause_col < 0 || t.col <= clause_col);
            }
        }
        if (opens) {
            if (!current.name.empty()) clauses.push_back(std::move(current));
            current = Clause{};
            current.name = t.text;
            current.line = t.line;
            current.col = t.col;
        } else if (!current.name.empty()) {
            current.tokens.push_back(t);
        } else {
            throw SyntaxError("expected a contract part keyword, got '" +
                                  t.text + "'",
                              t.line, t.col, kClauseKeywords);
        }
    }
    if (!current.name.empty()) clauses.push_back(std::move(current));
    return clauses;
}

// ---------------------------------------------------------------------------
// Number helper: accepts `N` and power expressions `B ^ E`
// ---------------------------------------------------------------------------

struct Cursor {
    const Span& toks;
    std::size_t pos = 0;
    const Token& peek(std::size_t ahead = 0) const {
        static Token end{Token::End, "", 0.0, 0, 0};
        return pos + ahead < toks.size() ? toks[pos + ahead] : end;
    }
    bool at_end() const { return pos >= toks.size(); }
    const Token& next() { return toks[pos++]; }
};

std::optional<double> try_number(Cursor& c) {
    if (c.peek().kind != Token::Number) return std::nullopt;
    double v = c.next().num;
    if (c.peek().kind == Token::Punct && c.peek().text == "^" &&
        c.peek(1).kind == Token::Number) {
        c.next();
        v = std::pow(v, c.next().num);
    }
    return v;
}

// ---------------------------------------------------------------------------
// Scope
// ---------------------------------------------------------------------------

const std::vector<std::string> kBuiltinOpClasses = {
    "matmul",      "reduction", "fused_attention", "elementwise", "softmax",
    "variance",    "log_sum_exp", "indexing",      "embedding",   "collective"};

std::optional<std::string> builtin_class_of(const std::string& word) {
    for (const auto& b : kBuiltinOpClasses) {
        if (word == b) return b;
        if (word == b + "s") return b;  // tolerate plural prose ("reductions")
    }
    return std::nullopt;
}

ScopeClause parse_scope(const Clause& cl) {
    ScopeClause s;
    s.text = detokenize(cl.tokens);
    if (cl.tokens.empty())
        throw SyntaxError("scope clause is empty", cl.line, cl.col);
    // Clean comma list of identifiers?
    bool clean = true;
    for (std::size_t i = 0; i < cl.tokens.size(); ++i) {
        const Token& t = cl.tokens[i];
        if (i % 2 == 0 ? t.kind != Token::Ident
                       : !(t.kind == Token::Punct && t.text == ","))
            clean = false;
    }
    if (clean && cl.tokens.size() % 2 == 1) {
        for (std::size_t i = 0; i < cl.tokens.size(); i += 2)
            s.classes.push_back(cl.tokens[i].text);
        return s;
    }
    // Prose: extract built-in names; none found means universal scope.
    for (const auto& t : cl.tokens) {
        if (t.kind != Token::Ident) continue;
        if (auto b = builtin_class_of(t.text)) {
            if (std::find(s.classes.begin(), s.classes.end(), *b) ==
                s.classes.end())
                s.classes.push_back(*b);
        }
    }
    if (s.classes.empty()) s.universal = true;
    if (!cl.tokens.empty() && cl.tokens.front().kind == Token::Ident &&
        lower(cl.tokens.front().text) == "all")
        s.universal = true;
    return s;
}

// ---------------------------------------------------------------------------
// Pre
// ---------------------------------------------------------------------------

Predicate parse_one_predicate(const Span& toks) {
    Predicate p;
    p.text = detokenize(toks);
    if (toks.empty()) return p;
    const std::string head = toks[0].kind == Token::Ident ? toks[0].text : "";
    auto ident_list_in_parens = [&](std::size_t open) {
        std::vector<std::string> ids;
        for (std::size_t i = open + 1;
             i < toks.size() && !(toks[i].kind == Token::Punct &&
                                  toks[i].text == ")");
             ++i)
            if (toks[i].kind == Token::Ident) ids.push_back(toks[i].text);
        return ids;
    };
    if (head == "precision" && toks.size() > 1 && toks[1].text == "(") {
        p.kind = PredicateKind::Precision;
        p.tensors = ident_list_in_parens(1);
        bool in_braces = false;
        for (const auto& t : toks) {
            if (t.kind == Token::Punct && t.text == "{") in_braces = true;
            else if (t.kind == Token::Punct && t.text == "}") in_braces = false;
            else if (in_braces && t.kind == Token::Ident)
                p.formats.push_back(t.text);
        }
        return p;
    }
    if (head == "shape" && toks.size() > 1 && toks[1].text == "(") {
        p.kind = PredicateKind::Shape;
        p.tensors = ident_list_in_parens(1);
        return p;
    }
    if (head == "value_range" && toks.size() > 1 && toks[1].text == "(") {
        p.kind = PredicateKind::ValueRange;
        p.tensors = ident_list_in_parens(1);
        return p;
    }
    if (head == "stack" || head == "flag") {
        p.kind = PredicateKind::Env;
        return p;
    }
    if (head == "version") {
        p.kind = PredicateKind::Version;
        return p;
    }
    return p;  // freeform
}

std::vector<Predicate> parse_pre(const Clause& cl) {
    std::vector<Predicate> preds;
    // Split on "and" at bracket depth zero.
    Span current;
    int depth = 0;
    for (const auto& t : cl.tokens) {
        if (t.kind == Token::Punct &&
            (t.text == "(" || t.text == "{" || t.text == "["))
            ++depth;
        if (t.kind == Token::Punct &&
            (t.text == ")" || t.text == "}" || t.text == "]"))
            --depth;
        if (depth == 0 && t.kind == Token::Ident && t.text == "and" &&
            !current.empty()) {
            preds.push_back(parse_one_predicate(current));
            current.clear();
        } else {
            current.push_back(t);
        }
    }
    if (!current.empty()) preds.push_back(parse_one_predicate(current));
    return preds;
}

// ---------------------------------------------------------------------------
// Post
// ---------------------------------------------------------------------------

bool all_caps(const std::string& s) {
    bool has_alpha = false;
    for (char c : s) {
        if (std::islower(static_cast<unsigned char>(c))) return false;
        if (std::isupper(static_cast<unsigned char>(c))) has_alpha = true;
    }
    return has_alpha;
}

Relation parse_post(const Clause& cl) {
    Relation r;
    r.text = detokenize(cl.tokens);
    bool has_bar = false;
    for (const auto& t : cl.tokens)
        if (t.kind == Token::Punct && t.text == "|") has_bar = true;
    for (std::size_t i = 0; i < cl.tokens.size(); ++i) {
        const Token& t = cl.tokens[i];
        if (t.kind == Token::Ident && t.text == "raise" &&
            i + 1 < cl.tokens.size() &&
            cl.tokens[i + 1].kind == Token::Ident &&
            all_caps(cl.tokens[i + 1].text)) {
            r.raises = cl.tokens[i + 1].text;
        }
        if (has_bar && t.kind == Token::Ident && all_caps(t.text) &&
            t.text != r.raises) {
            if (std::find(r.policy_set.begin(), r.policy_set.end(), t.text) ==
                r.policy_set.end())
                r.policy_set.push_back(t.text);
        }
    }
    return r;
}

// ---------------------------------------------------------------------------
// Tolerance
// ---------------------------------------------------------------------------

bool is_format_like_key(const std::string& s) { return all_caps(s); }

bool is_segment_end(const Token& t) {
    return t.kind == Token::Punct && (t.text == ";" || t.text == ",");
}

// Keywords that open a new tolerance segment. The aliases (bitwise, exact,
// any) are only recognized at segment heads so they can occur inside prose.
bool strong_tol_keyword(const std::string& s) {
    return s == "absolute" || s == "relative" || s == "ulp" || s == "none" ||
           s == "elementwise" || s == "per_precision";
}

bool is_registered_format(const std::string& s) {
    return kc::num::FormatRegistry::instance().find(s) != nullptr;
}

ToleranceSpec parse_tol_leaf(Cursor& c);

// Rest-of-segment capture: everything up to a top-level `;` / `,` / `}`, to a
// `for KEY` suffix with an all-caps key, to a `(FORMAT)` suffix naming a
// registered format, or to the start of the next tolerance keyword.
std::string capture_tail(Cursor& c, bool stop_at_for_key = true) {
    Span tail;
    int depth = 0;
    while (!c.at_end()) {
        const Token& t = c.peek();
        if (t.kind == Token::End) break;
        if (t.kind == Token::Punct &&
            (t.text == ")" || t.text == "}" || t.text == "]")) {
            if (depth == 0) break;  // closes an enclosing construct
            --depth;
            tail.push_back(c.next());
            continue;
        }
        if (depth == 0) {
            if (t.kind == Token::Punct && (t.text == ";" || t.text == ","))
                break;
            if (t.kind == Token::Ident && strong_tol_keyword(t.text)) break;
            if (stop_at_for_key && t.kind == Token::Ident &&
                t.text == "for" && c.peek(1).kind == Token::Ident &&
                is_format_like_key(c.peek(1).text))
                break;
            if (t.kind == Token::Punct && t.text == "(" &&
                c.peek(1).kind == Token::Ident &&
                is_registered_format(c.peek(1).text) &&
                c.peek(2).text == ")")
                break;
        }
        if (t.kind == Token::Punct &&
            (t.text == "(" || t.text == "{" || t.text == "["))
            ++depth;
        tail.push_back(c.next());
    }
    while (!tail.empty() && tail.back().kind == Token::Punct &&
           tail.back().text == ",")
        tail.pop_back();
    return detokenize(tail);
}

ToleranceSpec parse_tol_leaf(Cursor& c) {
    ToleranceSpec t;
    const Token& head = c.peek();
    if (head.kind != Token::Ident) {
        t.kind = ToleranceSpec::Kind::None;
        t.note = capture_tail(c);
        return t;
    }
    const std::string kw = head.text;
    if (kw == "absolute" || kw == "relative" || kw == "ulp") {
        c.next();
        t.kind = kw == "absolute" ? ToleranceSpec::Kind::Absolute
                 : kw == "relative" ? ToleranceSpec::Kind::Relative
                                    : ToleranceSpec::Kind::Ulp;
        if (auto v = try_number(c)) {
            t.value = *v;
            t.note = capture_tail(c);
            return t;
        }
        // Symbolic tail. "within N ULP(F) ..." maps onto a ULP bound; any
        // other expression is kept as a formula resolved at measurement time.
        std::size_t save = c.pos;
        if (c.peek().kind == Token::Ident && c.peek().text == "within" &&
            c.peek(1).kind == Token::Number &&
            c.peek(2).kind == Token::Ident &&
            lower(c.peek(2).text).rfind("ulp", 0) == 0) {
            c.next();
            t.kind = ToleranceSpec::Kind::Ulp;
            t.value = c.next().num;
            c.next();  // ULP
            if (c.peek().text == "(") {  // skip the ULP(F) argument
                int depth = 0;
                do {
                    const Token& tk = c.next();
                    if (tk.text == "(") ++depth;
                    if (tk.text == ")") --depth;
                } while (!c.at_end() && depth > 0);
            }
            t.note = capture_tail(c);
            return t;
        }
        c.pos = save;
        t.formula = capture_tail(c, /*stop_at_for_key=*/false);
        return t;
    }
    if (kw == "none") {
        c.next();
        t.kind = ToleranceSpec::Kind::None;
        t.note = capture_tail(c);
        return t;
    }
    if (kw == "bitwise" || kw == "exact") {
        c.next();
        t.kind = ToleranceSpec::Kind::Ulp;
        t.value = 0.0;
        t.note = capture_tail(c);
        return t;
    }
    if (kw == "any") {
        c.next();
        t.kind = ToleranceSpec::Kind::None;
        t.note = capture_tail(c);
        return t;
    }
    if (kw == "elementwise") {
        c.next();
        t.kind = ToleranceSpec::Kind::Elementwise;
        t.children.push_back(parse_tol_leaf(c));
        while (c.peek().kind == Token::Ident && c.peek().text == "and") {
            c.next();
            t.children.push_back(parse_tol_leaf(c));
        }
        return t;
    }
    if (kw == "per_precision") {
        c.next();
        t.kind = ToleranceSpec::Kind::PerPrecision;
        if (c.peek().text != "{")
            throw SyntaxError("expected '{' after per_precision", head.line,
                              head.col, {"{"});
        c.next();
        while (!c.at_end() && c.peek().text != "}") {
            if (c.peek().kind != Token::Ident)
                throw SyntaxError("expected precision name", c.peek().line,
                                  c.peek().col);
            t.keys.push_back(c.next().text);
            if (c.peek().text == ":") c.next();
            t.children.push_back(parse_tol_leaf(c));
            if (c.peek().text == ",") c.next();
        }
        if (c.peek().text == "}") c.next();
        return t;
    }
    // No recognized keyword: keep the prose.
    t.kind = ToleranceSpec::Kind::None;
    t.note = capture_tail(c);
    return t;
}

ToleranceSpec parse_tolerance(const Clause& cl) {
    Cursor c{cl.tokens};
    struct Item {
        ToleranceSpec spec;
        std::string key;
    };
    std::vector<Item> items;
    while (!c.at_end() && c.peek().kind != Token::End) {
        Item item;
        item.spec = parse_tol_leaf(c);
        if (c.peek().kind == Token::Ident && c.peek().text == "for" &&
            c.peek(1).kind == Token::Ident &&
            is_format_like_key(c.peek(1).text)) {
            c.next();
            item.key = c.next().text;
        } else if (c.peek().text == "(" && c.peek(1).kind == Token::Ident &&
                   is_registered_format(c.peek(1).text) &&
                   c.peek(2).text == ")") {
            c.next();
            item.key = c.next().text;
            c.next();
        }
        while (!c.at_end() && is_segment_end(c.peek())) c.next();
        items.push_back(std::move(item));
        if (c.peek().kind == Token::End) break;
        if (c.at_end()) break;
    }
    if (items.empty()) return ToleranceSpec{};
    bool keyed = std::any_of(items.begin(), items.end(),
                             [](const Item& i) { return !i.key.empty(); });
    if (!keyed && items.size() == 1) return items[0].spec;
    if (keyed) {
        ToleranceSpec t;
        t.kind = ToleranceSpec::Kind::PerPrecision;
        for (auto& i : items) {
            t.keys.push_back(i.key);
            t.children.push_back(std::move(i.spec));
        }
        return t;
    }
    ToleranceSpec t;  // unkeyed multi-segment: treat as elementwise conjunction
    t.kind = ToleranceSpec::Kind::Elementwise;
    for (auto& i : items) t.children.push_back(std::move(i.spec));
    return t;
}

// ---------------------------------------------------------------------------
// Reference
// ---------------------------------------------------------------------------

RefSpec parse_reference(const Clause& cl) {
    RefSpec r;
    const Span& toks = cl.tokens;
    if (toks.empty()) return r;
    const std::string head = toks[0].kind == Token::Ident ? toks[0].text : "";
    const auto& reg = kc::num::FormatRegistry::instance();

    auto parse_with_tail = [&](std::size_t after_target) {
        // Prose before "with" becomes the note; a well-formed option list
        // after "with" becomes options, otherwise the whole tail is prose.
        std::size_t with_pos = toks.size();
        for (std::size_t i = after_target; i < toks.size(); ++i)
            if (toks[i].kind == Token::Ident && toks[i].text == "with") {
                with_pos = i;
                break;
            }
        Span prefix(toks.begin() + after_target, toks.begin() + with_pos);
        while (!prefix.empty() && prefix.back().kind == Token::Punct &&
               prefix.back().text == ",")
            prefix.pop_back();
        while (!prefix.empty() && prefix.front().kind == Token::Punct &&
               prefix.front().text == ",")
            prefix.erase(prefix.begin());
        std::string note = detokenize(prefix);
        if (with_pos < toks.size()) {
            std::map<std::string, std::string> opts;
            bool ok = true;
            std::size_t i = with_pos + 1;
            while (i < toks.size()) {
                if (i + 2 < toks.size() && toks[i].kind == Token::Ident &&
                    toks[i + 1].text == "=" &&
                    toks[i + 2].kind == Token::Ident) {
                    opts[toks[i].text] = toks[i + 2].text;
                    i += 3;
                    if (i < toks.size() && toks[i].text == ",") ++i;
                    else if (i < toks.size()) { ok = false; break; }
                } else {
                    ok = false;
                    break;
                }
            }
            if (ok && !opts.empty()) {
                r.options = std::move(opts);
            } else {
                if (!note.empty()) note += " ";
                note += detokenize(toks, with_pos, toks.size());
            }
        }
        r.note = note;
    };

    if (head == "higher_precision") {
        r.kind = RefSpec::Kind::HigherPrecision;
        if (toks.size() < 2 || toks[1].kind != Token::Ident)
            throw SyntaxError("expected precision after higher_precision",
                              cl.line, cl.col);
        r.target = toks[1].text;
        parse_with_tail(2);
        return r;
    }
    if (head == "alternate_stack") {
        r.kind = RefSpec::Kind::AlternateStack;
        if (toks.size() > 1) r.target = toks[1].text;
        r.note = detokenize(toks, 2, toks.size());
        return r;
    }
    if (head == "algebraic") {
        r.kind = RefSpec::Kind::Algebraic;
        if (toks.size() > 1 && toks[1].kind == Token::Ident)
            r.target = toks[1].text;
        r.note = detokenize(toks, 2, toks.size());
        return r;
    }
    if (head == "stable_algorithm") {
        r.kind = RefSpec::Kind::StableAlgorithm;
        if (toks.size() > 1) r.target = toks[1].text;
        r.note = detokenize(toks, 2, toks.size());
        return r;
    }
    if (head == "spec") {
        r.kind = RefSpec::Kind::Spec;
        r.target = detokenize(toks, 1, toks.size());
        return r;
    }
    // Prose fallback. A named precision anywhere makes this a
    // higher-precision reference ("FP64 row-major sum"); anything else is a
    // spec-style citation ("PyTorch CPU on same input").
    for (std::size_t i = 0; i < toks.size(); ++i) {
        if (toks[i].kind == Token::Ident && reg.find(toks[i].text)) {
            r.kind = RefSpec::Kind::HigherPrecision;
            r.target = toks[i].text;
            Span rest;
            for (std::size_t j = 0; j < toks.size(); ++j)
                if (j != i) rest.push_back(toks[j]);
            Clause sub{cl.name, std::move(rest), cl.line, cl.col};
            // Reuse the with-tail logic over the remaining prose.
            RefSpec tmp;
            std::swap(tmp, r);
            r = tmp;
            {
                const Span& rtoks = sub.tokens;
                std::size_t with_pos = rtoks.size();
                for (std::size_t k = 0; k < rtoks.size(); ++k)
                    if (rtoks[k].kind == Token::Ident &&
                        rtoks[k].text == "with") {
                        with_pos = k;
                        break;
                    }
                (void)with_pos;
                r.note = detokenize(rtoks);
            }
            return r;
        }
    }
    r.kind = RefSpec::Kind::Spec;
    r.target = detokenize(toks);
    return r;
}

// ---------------------------------------------------------------------------
// Measure
// ---------------------------------------------------------------------------

std::vector<double> braced_numbers(const Span& toks, std::size_t& param_pos) {
    // Finds `ID in { n, n, ... }` and returns the numbers; param_pos receives
    // the index of ID (npos when absent).
    param_pos = std::string::npos;
    for (std::size_t i = 0; i + 2 < toks.size(); ++i) {
        if (toks[i].kind == Token::Ident && toks[i + 1].kind == Token::Ident &&
            toks[i + 1].text == "in" && toks[i + 2].text == "{") {
            std::vector<double> vals;
            for (std::size_t j = i + 3;
                 j < toks.size() && toks[j].text != "}"; ++j)
                if (toks[j].kind == Token::Number) vals.push_back(toks[j].num);
            if (!vals.empty()) {
                param_pos = i;
                return vals;
            }
        }
    }
    return {};
}

Protocol parse_measure(const Clause& cl) {
    Protocol p;
    p.text = detokenize(cl.tokens);
    const Span& toks = cl.tokens;
    if (toks.empty()) return p;
    const std::string head =
        toks[0].kind == Token::Ident ? lower(toks[0].text) : "";
    auto detect_anomaly = [&]() {
        if (contains_word(toks, "denormal")) return Protocol::Anomaly::Denormal;
        if (contains_word(toks, "nan") || contains_word(toks, "inf"))
            return Protocol::Anomaly::Exceptional;
        if (contains_word(toks, "index") || contains_word(toks, "in-bound") ||
            contains_word(toks, "in-range"))
            return Protocol::Anomaly::IndexMix;
        if (contains_word(toks, "spanning"))
            return Protocol::Anomaly::WideDynamicRange;
        if (contains_word(toks, "overflows") ||
            contains_word(toks, "overflow") ||
            contains_word(toks, "saturates") ||
            contains_word(toks, "saturation"))
            return Protocol::Anomaly::NearSaturation;
        return Protocol::Anomaly::None;
    };

    if (head == "sample") {
        p.kind = Protocol::Kind::Sample;
        Cursor c{toks};
        c.next();
        if (auto v = try_number(c)) p.count = long(*v);
        return p;
    }
    if (head == "sweep" || head == "evaluate") {
        p.kind = Protocol::Kind::Sweep;
        std::size_t param_pos;
        p.values = braced_numbers(toks, param_pos);
        if (param_pos != std::string::npos)
            p.param = toks[param_pos].text;
        else if (toks.size() > 1 && toks[1].kind == Token::Ident)
            p.param = toks[1].text;
        p.holdout = text_contains(p.text, "held-out") ||
                    text_contains(p.text, "non-benchmarked");
        return p;
    }
    if (head == "inject" || head == "construct") {
        p.kind = Protocol::Kind::Inject;
        p.anomaly = detect_anomaly();
        return p;
    }
    if (head == "enumerate") {
        p.kind = Protocol::Kind::Enumerate;
        return p;
    }
    if (head == "invoke") {
        p.kind = Protocol::Kind::Repeat;
        Cursor c{toks};
        c.next();
        if (auto v = try_number(c)) p.count = long(*v);
        if (p.count < 2) p.count = 2;
        return p;
    }
    if (head == "run") {
        std::size_t param_pos;
        auto vals = braced_numbers(toks, param_pos);
        if (!vals.empty()) {
            p.kind = Protocol::Kind::Sweep;
            p.values = std::move(vals);
            p.param = toks[param_pos].text;
            return p;
        }
        p.kind = Protocol::Kind::Custom;
        return p;
    }
    if (contains_word(toks, "schedules") || contains_word(toks, "schedule")) {
        p.kind = Protocol::Kind::Enumerate;
        return p;
    }
    p.kind = Protocol::Kind::Custom;
    return p;
}

// ---------------------------------------------------------------------------
// Violation
// ---------------------------------------------------------------------------

ViolationSignature parse_violation(const Clause& cl) {
    ViolationSignature v;
    v.text = detokenize(cl.tokens);
    const std::string t = lower(v.text);
    auto has = [&](const char* s) { return t.find(s) != std::string::npos; };

    if (has("matches none") || has("without declaring") ||
        has("policy not documented") ||
        (has("out-of-bounds") && has("silently"))) {
        v.matcher = ViolationSignature::Matcher::PolicyMismatch;
    } else if (has("tops out at") || has("saturates at") ||
               has("saturation value")) {
        v.matcher = ViolationSignature::Matcher::SaturationAtValue;
        for (std::size_t i = 0; i < cl.tokens.size(); ++i) {
            if (cl.tokens[i].kind == Token::Number &&
                cl.tokens[i].num >= 1.0) {
                v.saturation_value = cl.tokens[i].num;
                v.has_saturation_value = true;
                break;
            }
        }
    } else if (has("non-bitwise") || has("differ in any bit") ||
               has("any pair of invocations differ")) {
        v.matcher = ViolationSignature::Matcher::BitwiseMismatch;
    } else if (has("benchmarked") || has("for s in b") || has("held-out")) {
        v.matcher = ViolationSignature::Matcher::HoldoutDivergence;
    } else if (has("tolerance") &&
               (has("exceed") || has("beyond tolerance") ||
                has("> tolerance"))) {
        v.matcher = ViolationSignature::Matcher::ToleranceExceededFraction;
    }
    return v;
}

}  // namespace

// ---------------------------------------------------------------------------
// parse_contract
// ---------------------------------------------------------------------------

ContractAst parse_contract(const std::string& source) {
    const Span toks = lex(source);
    Cursor c{toks};
    if (!(c.peek().kind == Token::Ident && c.peek().text == "contract"))
        throw SyntaxError("expected 'contract'", c.peek().line, c.peek().col,
                          {"contract"});
    c.next();
    if (c.peek().kind != Token::Ident)
        throw MissingPartError("contract is missing its identifier",
                               {"identifier"}, c.peek().line, c.peek().col);
    ContractAst ast;
    ast.id = c.next().text;
    if (!(c.peek().kind == Token::Punct && c.peek().text == "{"))
        throw SyntaxError("expected '{' after contract id", c.peek().line,
                          c.peek().col, {"{"});
    c.next();
    // Find the matching closing brace (last '}' at depth 0).
    std::size_t body_begin = c.pos;
    std::size_t body_end = body_begin;
    int depth = 1;
    for (std::size_t i = body_begin; i < toks.size(); ++i) {
        if (toks[i].kind == Token::Punct && toks[i].text == "{") ++depth;
        if (toks[i].kind == Token::Punct && toks[i].text == "}") {
            --depth;
            if (depth == 0) {
                body_end = i;
                break;
            }
        }
        if (toks[i].kind == Token::End)
            throw SyntaxError("unterminated contract body", toks[i].line,
                              toks[i].col, {"}"});
    }
    if (depth != 0)
        throw SyntaxError("unterminated contract body", toks.back().line,
                          toks.back().col, {"}"});

    std::vector<Clause> clauses = split_clauses(toks, body_begin, body_end);

    std::set<std::string> seen;
    for (const auto& cl : clauses) {
        if (seen.count(cl.name))
            throw DuplicatePartError("duplicate part '" + cl.name + "'",
                                     cl.name, cl.line, cl.col);
        seen.insert(cl.name);
    }
    std::vector<std::string> missing;
    for (const auto& kw : kClauseKeywords)
        if (!seen.count(kw)) missing.push_back(kw);
    if (!missing.empty()) {
        std::string msg = "contract " + ast.id + " is missing part(s):";
        for (const auto& m : missing) msg += " " + m;
        throw MissingPartError(msg, missing, 1, 1);
    }

    for (const auto& cl : clauses) {
        if (cl.name == "scope") ast.scope = parse_scope(cl);
        else if (cl.name == "pre") ast.pre = parse_pre(cl);
        else if (cl.name == "post") ast.post = parse_post(cl);
        else if (cl.name == "tolerance") ast.tolerance = parse_tolerance(cl);
        else if (cl.name == "reference") ast.reference = parse_reference(cl);
        else if (cl.name == "measure") ast.measure = parse_measure(cl);
        else if (cl.name == "violation") ast.violation = parse_violation(cl);
    }
    return ast;
}

// ---------------------------------------------------------------------------
// canonical_serialize
// ---------------------------------------------------------------------------

namespace {

std::string serialize_tolerance(const ToleranceSpec& t) {
    auto leaf = [](const ToleranceSpec& s) {
        std::string out;
        switch (s.kind) {
            case ToleranceSpec::Kind::Absolute: out = "absolute"; break;
            case ToleranceSpec::Kind::Relative: out = "relative"; break;
            case ToleranceSpec::Kind::Ulp: out = "ulp"; break;
            case ToleranceSpec::Kind::None: out = "none"; break;
            default: out = "none"; break;
        }
        if (!s.formula.empty()) {
            out += " " + s.formula;
        } else if (s.kind != ToleranceSpec::Kind::None) {
            out += " " + format_number(s.value);
        }
        if (!s.note.empty()) out += " " + s.note;
        return out;
    };
    switch (t.kind) {
        case ToleranceSpec::Kind::PerPrecision: {
            std::string out = "per_precision {";
            for (std::size_t i = 0; i < t.children.size(); ++i) {
                if (i) out += ",";
                out += t.keys[i] + " : " + serialize_tolerance(t.children[i]);
            }
            out += "}";
            return out;
        }
        case ToleranceSpec::Kind::Elementwise: {
            std::string out = "elementwise ";
            for (std::size_t i = 0; i < t.children.size(); ++i) {
                if (i) out += " and ";
                out += serialize_tolerance(t.children[i]);
            }
            return out;
        }
        default:
            return leaf(t);
    }
}

std::string serialize_reference(const RefSpec& r) {
    std::string out;
    switch (r.kind) {
        case RefSpec::Kind::HigherPrecision: out = "higher_precision"; break;
        case RefSpec::Kind::AlternateStack: out = "alternate_stack"; break;
        case RefSpec::Kind::Algebraic: out = "algebraic"; break;
        case RefSpec::Kind::StableAlgorithm: out = "stable_algorithm"; break;
        case RefSpec::Kind::Spec: out = "spec"; break;
    }
    if (!r.target.empty()) out += " " + r.target;
    if (!r.note.empty()) out += " " + r.note;
    if (!r.options.empty()) {
        out += " with ";
        bool first = true;
        for (const auto& [k, v] : r.options) {
            if (!first) out += ", ";
            first = false;
            out += k + " = " + v;
        }
    }
    return out;
}

std::string serialize_pre(const std::vector<Predicate>& preds) {
    std::string out;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (i) out += " and ";
        out += preds[i].text;
    }
    return out;
}

}  // namespace

std::string canonical_serialize(const ContractAst& ast) {
    std::ostringstream os;
    os << "contract " << ast.id << " {\n";
    os << "  scope " << ast.scope.text << "\n";
    os << "  pre " << serialize_pre(ast.pre) << "\n";
    os << "  post " << ast.post.text << "\n";
    os << "  tolerance " << serialize_tolerance(ast.tolerance) << "\n";
    os << "  reference " << serialize_reference(ast.reference) << "\n";
    os << "  measure " << ast.measure.text << "\n";
    os << "  violation " << ast.violation.text << "\n";
    os << "}\n";
    return os.str();
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

bool is_builtin_op_class(const std::string& name) {
    return builtin_class_of(name).has_value() &&
           *builtin_class_of(name) == name;
}

bool ScopeClause::covers(const std::string& op_class) const {
    if (universal) return true;
    return std::find(classes.begin(), classes.end(), op_class) !=
           classes.end();
}

bool ToleranceSpec::has_numeric_bound() const {
    switch (kind) {
        case Kind::Ulp:
            return true;
        case Kind::Absolute:
        case Kind::Relative:
            return true;  // numeric value or a symbolic formula, both explicit
        case Kind::Elementwise:
        case Kind::PerPrecision:
            return std::any_of(children.begin(), children.end(),
                               [](const ToleranceSpec& c) {
                                   return c.has_numeric_bound();
                               });
        case Kind::None:
            return false;
    }
    return false;
}

const ToleranceSpec* ToleranceSpec::resolve(const std::string& key) const {
    if (kind != Kind::PerPrecision) return this;
    for (std::size_t i = 0; i < keys.size(); ++i)
        if (keys[i] == key) return &children[i];
    return nullptr;
}

int ValidationReport::error_count() const {
    return int(std::count_if(findings.begin(), findings.end(),
                             [](const Finding& f) {
                                 return f.severity == "error";
                             }));
}

int ValidationReport::warning_count() const {
    return int(findings.size()) - error_count();
}

std::string ValidationReport::to_json() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < findings.size(); ++i) {
        const Finding& f = findings[i];
        if (i) os << ",";
        os << "{\"rule\":\"" << f.rule << "\",\"severity\":\"" << f.severity
           << "\",\"message\":\"" << f.message << "\",\"line\":" << f.line
           << ",\"column\":" << f.column << "}";
    }
    os << "]";
    return os.str();
}

ValidationReport validate(const ContractAst& ast) {
    ValidationReport rep;
    const auto& reg = kc::num::FormatRegistry::instance();
    auto add = [&](std::string rule, std::string severity, std::string msg) {
        rep.findings.push_back(
            {std::move(rule), std::move(severity), std::move(msg), 0, 0});
    };

    if (ast.scope.classes.empty() && !ast.scope.universal)
        add("EMPTY_SCOPE", "error", "scope names no operation class");
    for (const auto& cls : ast.scope.classes)
        if (!is_builtin_op_class(cls))
            add("EXTENSION_OP_CLASS", "warning",
                "op class '" + cls + "' is not built in; treated as extension");

    // An algebraic reference naming a property must be paired with an
    // explicit epsilon or a ULP/bitwise bound. A bare `algebraic` reference
    // backs a structural postcondition and is exempt.
    if (ast.reference.kind == RefSpec::Kind::Algebraic &&
        !ast.reference.target.empty() && !ast.tolerance.has_numeric_bound())
        add("ALG_NO_EPSILON", "error",
            "algebraic reference '" + ast.reference.target +
                "' requires an explicit epsilon or a ulp bound");

    if (ast.tolerance.kind == ToleranceSpec::Kind::PerPrecision) {
        for (const auto& k : ast.tolerance.keys)
            if (!reg.find(k))
                add("EXTENSION_FORMAT", "warning",
                    "per_precision key '" + k +
                        "' is not a registered format");
        // Coverage note against a precision precondition.
        for (const auto& p : ast.pre) {
            if (p.kind != PredicateKind::Precision) continue;
            std::set<std::string> pred(p.formats.begin(), p.formats.end());
            std::set<std::string> keys(ast.tolerance.keys.begin(),
                                       ast.tolerance.keys.end());
            if (!pred.empty() && pred == keys) {
                std::string list;
                for (const auto& f : ast.tolerance.keys)
                    list += (list.empty() ? "" : ", ") + f;
                add("PER_PRECISION_COVERS", "warning",
                    "per-precision tolerances cover {" + list +
                        "} exactly matching the precision predicate");
            }
        }
    }

    if (ast.measure.kind == Protocol::Kind::Sample && ast.measure.count == 0)
        add("BAD_SAMPLE_COUNT", "error", "sample count must be >= 1");
    if (ast.measure.kind == Protocol::Kind::Repeat && ast.measure.count < 2)
        add("BAD_REPEAT_COUNT", "error", "repeat count must be >= 2");
    if (ast.tolerance.kind == ToleranceSpec::Kind::Ulp &&
        (ast.tolerance.value < 0.0 ||
         ast.tolerance.value != std::floor(ast.tolerance.value)))
        add("BAD_ULP_BOUND", "error",
            "ulp tolerance must be a nonnegative integer");
    if (ast.tolerance.kind == ToleranceSpec::Kind::PerPrecision) {
        std::set<std::string> uniq(ast.tolerance.keys.begin(),
                                   ast.tolerance.keys.end());
        if (uniq.size() != ast.tolerance.keys.size())
            add("DUP_PER_PRECISION_KEY", "error",
                "per_precision keys must be unique");
    }
    for (const auto& p : ast.pre) {
        if (p.kind != PredicateKind::Precision) continue;
        for (const auto& f : p.formats)
            if (!reg.find(f))
                add("EXTENSION_FORMAT", "warning",
                    "precision predicate names unknown format '" + f + "'");
    }
    return rep;
}

// ---------------------------------------------------------------------------
// parse_corpus
// ---------------------------------------------------------------------------

std::vector<CorpusEntry> parse_corpus(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    if (!fs::is_directory(dir, ec))
        throw std::runtime_error("not a readable directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".kc")
            files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<CorpusEntry> out;
    for (const auto& f : files) {
        CorpusEntry entry;
        entry.name = f.stem().string();
        std::ifstream in(f);
        std::stringstream ss;
        ss << in.rdbuf();
        try {
            entry.result = parse_contract(ss.str());
        } catch (const ParseError& e) {
            entry.result = std::string(e.what()) + " (line " +
                           std::to_string(e.line) + ", col " +
                           std::to_string(e.column) + ")";
        }
        out.push_back(std::move(entry));
    }
    return out;
}

}  // namespace kc::lang
