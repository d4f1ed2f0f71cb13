#include "m2m/target.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <sstream>

#include "m2m/error.hpp"

namespace m2m {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void check_attr(std::size_t attr, std::size_t d) {
  if (attr >= d) {
    throw ValidationError("attribute index " + std::to_string(attr + 1) + " is out of range (d = " +
                          std::to_string(d) + ")");
  }
}

/// Shortest text that reads back to the same double.
std::string format_number(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// Cursor over the query text; all error columns are 1-based offsets into the
// original string.
class Scanner {
 public:
  Scanner(std::string_view text, std::size_t offset = 0) : text_(text), pos_(offset) {}

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }
  bool at_end() {
    skip_ws();
    return pos_ >= text_.size();
  }
  std::size_t pos() const { return pos_; }
  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }
  void advance(std::size_t n = 1) { pos_ += n; }
  std::string_view rest() const { return text_.substr(pos_); }

  [[noreturn]] void fail(const std::string& what) const { fail_at(pos_, what); }
  [[noreturn]] void fail_at(std::size_t at, const std::string& what) const {
    std::ostringstream msg;
    msg << "parse error at column " << (at + 1) << ": " << what << "\n  " << text_ << "\n  "
        << std::string(std::min(at, text_.size()), ' ') << '^';
    throw ValidationError(msg.str());
  }

  std::string word() {
    skip_ws();
    const std::size_t start = pos_;
    while (pos_ < text_.size() && std::isalpha(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    return std::string(text_.substr(start, pos_ - start));
  }

  std::size_t integer(const char* what) {
    skip_ws();
    const std::size_t start = pos_;
    std::size_t value = 0;
    const auto [ptr, ec] = std::from_chars(text_.data() + pos_, text_.data() + text_.size(), value);
    if (ec != std::errc() || ptr == text_.data() + pos_) {
      fail_at(start, std::string("expected ") + what);
    }
    pos_ = static_cast<std::size_t>(ptr - text_.data());
    if (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_]))) {
      fail(std::string("unexpected character after ") + what);
    }
    return value;
  }

  double number() {
    skip_ws();
    const std::size_t start = pos_;
    std::size_t end = pos_;
    while (end < text_.size() && (std::isdigit(static_cast<unsigned char>(text_[end])) || text_[end] == '.' ||
                                  text_[end] == '-' || text_[end] == '+' || text_[end] == 'e' ||
                                  text_[end] == 'E')) {
      ++end;
    }
    const char* first = text_.data() + start;
    if (first != text_.data() + end && *first == '+') ++first;
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(first, text_.data() + end, value);
    if (start == end || ec != std::errc() || ptr != text_.data() + end || !std::isfinite(value)) {
      fail_at(start, "expected a number");
    }
    pos_ = end;
    return value;
  }

 private:
  std::string_view text_;
  std::size_t pos_;
};

std::size_t attribute_ref(Scanner& sc, std::size_t d) {
  sc.skip_ws();
  const std::size_t start = sc.pos();
  if (sc.peek() != 'x' && sc.peek() != 'X') {
    sc.fail("expected an attribute reference like x1");
  }
  sc.advance();
  std::size_t idx = 0;
  const auto rest = sc.rest();
  const auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), idx);
  if (ec != std::errc() || ptr == rest.data()) {
    sc.fail("expected an attribute number after 'x'");
  }
  sc.advance(static_cast<std::size_t>(ptr - rest.data()));
  if (idx == 0 || idx > d) {
    sc.fail_at(start, "attribute x" + std::to_string(idx) + " does not exist (d = " + std::to_string(d) + ")");
  }
  return idx - 1;
}

target::BoxIndicator parse_predicates_at(std::string_view text, std::size_t offset, std::size_t d) {
  // Strip one layer of matching quotes around the whole conjunction.
  std::size_t first = offset;
  while (first < text.size() && std::isspace(static_cast<unsigned char>(text[first]))) ++first;
  std::size_t last = text.size();
  while (last > first && std::isspace(static_cast<unsigned char>(text[last - 1]))) --last;
  if (last > first && (text[first] == '"' || text[first] == '\'')) {
    if (last - first < 2 || text[last - 1] != text[first]) {
      Scanner(text, first).fail("unterminated quote");
    }
    ++first;
    --last;
  }
  const std::string_view body = text.substr(0, last);
  Scanner sc(body, first);
  target::BoxIndicator box;
  if (sc.at_end()) {
    sc.fail("expected at least one predicate");
  }
  for (;;) {
    Predicate p;
    p.attr = attribute_ref(sc, d);
    sc.skip_ws();
    const auto rest = sc.rest();
    if (rest.starts_with("<=")) {
      p.bound = Predicate::Bound::Upper;
    } else if (rest.starts_with(">=")) {
      p.bound = Predicate::Bound::Lower;
    } else {
      sc.fail("expected '<=' or '>='");
    }
    sc.advance(2);
    p.value = sc.number();
    box.predicates.push_back(p);
    if (sc.at_end()) break;
    const std::size_t at = sc.pos();
    std::string conj = sc.word();
    std::transform(conj.begin(), conj.end(), conj.begin(), [](unsigned char c) { return std::tolower(c); });
    if (conj != "and") {
      sc.fail_at(at, "expected 'and' between predicates");
    }
  }
  return box;
}

}  // namespace

double eval_target(const TargetSpec& t, std::span<const double> x) {
  return std::visit(
      Overloaded{
          [&](const target::Moment& m) {
            check_attr(m.attr, x.size());
            return std::pow(x[m.attr], static_cast<double>(m.order));
          },
          [&](const target::BoxIndicator& b) {
            for (const auto& p : b.predicates) {
              check_attr(p.attr, x.size());
              const bool ok = p.bound == Predicate::Bound::Upper ? x[p.attr] <= p.value : x[p.attr] >= p.value;
              if (!ok) return 0.0;
            }
            return 1.0;
          },
          [&](const target::CdfThreshold& c) {
            check_attr(c.attr, x.size());
            return x[c.attr] <= c.threshold ? 1.0 : 0.0;
          },
          [&](const target::CenteredProduct& c) {
            check_attr(c.i, x.size());
            check_attr(c.j, x.size());
            return (x[c.i] - c.mu_i) * (x[c.j] - c.mu_j);
          },
          [&](const target::Custom& c) {
            if (!c.fn) throw ValidationError("custom target has no function");
            return c.fn(x);
          },
      },
      t);
}

void validate(const TargetSpec& t, const Domain& domain) {
  const std::size_t d = domain.dim();
  std::visit(Overloaded{
                 [&](const target::Moment& m) {
                   check_attr(m.attr, d);
                   if (m.order == 0) throw ValidationError("moment order must be at least 1");
                 },
                 [&](const target::BoxIndicator& b) {
                   if (b.predicates.empty()) throw ValidationError("a box needs at least one predicate");
                   std::vector<int> uppers(d, 0);
                   std::vector<int> lowers(d, 0);
                   std::vector<double> hi(domain.upper());
                   std::vector<double> lo(domain.lower());
                   for (const auto& p : b.predicates) {
                     check_attr(p.attr, d);
                     if (!(p.value >= domain.lower()[p.attr] && p.value <= domain.upper()[p.attr])) {
                       throw ValidationError("bound " + format_number(p.value) + " on x" +
                                             std::to_string(p.attr + 1) + " lies outside the domain");
                     }
                     if (p.bound == Predicate::Bound::Upper) {
                       if (++uppers[p.attr] > 1) {
                         throw ValidationError("more than one upper bound on x" + std::to_string(p.attr + 1));
                       }
                       hi[p.attr] = p.value;
                     } else {
                       if (++lowers[p.attr] > 1) {
                         throw ValidationError("more than one lower bound on x" + std::to_string(p.attr + 1));
                       }
                       lo[p.attr] = p.value;
                     }
                   }
                   for (std::size_t j = 0; j < d; ++j) {
                     if (lo[j] > hi[j]) {
                       throw ValidationError("empty box: x" + std::to_string(j + 1) + " >= " + format_number(lo[j]) +
                                             " contradicts x" + std::to_string(j + 1) + " <= " +
                                             format_number(hi[j]));
                     }
                   }
                 },
                 [&](const target::CdfThreshold& c) {
                   check_attr(c.attr, d);
                   if (!std::isfinite(c.threshold)) throw ValidationError("CDF threshold must be finite");
                 },
                 [&](const target::CenteredProduct& c) {
                   check_attr(c.i, d);
                   check_attr(c.j, d);
                   if (!std::isfinite(c.mu_i) || !std::isfinite(c.mu_j)) {
                     throw ValidationError("centering values must be finite");
                   }
                 },
                 [&](const target::Custom& c) {
                   if (!c.fn) throw ValidationError("custom target has no function");
                 },
             },
             t);
}

TargetFn to_function(const TargetSpec& t, const Domain& domain) {
  validate(t, domain);
  if (const auto* custom = std::get_if<target::Custom>(&t)) {
    return custom->fn;
  }
  return [t](std::span<const double> x) { return eval_target(t, x); };
}

std::string describe(const TargetSpec& t) {
  return std::visit(
      Overloaded{
          [](const target::Moment& m) {
            return "moment " + std::to_string(m.attr + 1) + " " + std::to_string(m.order);
          },
          [](const target::BoxIndicator& b) {
            std::string out = "count \"";
            for (std::size_t k = 0; k < b.predicates.size(); ++k) {
              const auto& p = b.predicates[k];
              if (k) out += " and ";
              out += "x" + std::to_string(p.attr + 1) + (p.bound == Predicate::Bound::Upper ? "<=" : ">=") +
                     format_number(p.value);
            }
            return out + "\"";
          },
          [](const target::CdfThreshold& c) {
            return "cdf " + std::to_string(c.attr + 1) + " <= " + format_number(c.threshold);
          },
          [](const target::CenteredProduct& c) {
            return "cov " + std::to_string(c.i + 1) + " " + std::to_string(c.j + 1);
          },
          [](const target::Custom& c) { return c.name.empty() ? std::string("custom") : c.name; },
      },
      t);
}

double empirical_mean(const Dataset& data, const TargetFn& f) {
  if (data.empty()) {
    throw ValidationError("empirical mean of an empty dataset");
  }
  double sum = 0.0;
  double carry = 0.0;
  for (std::size_t i = 0; i < data.rows(); ++i) {
    const double v = f(data.row(i));
    const double t = sum + v;
    carry += std::abs(sum) >= std::abs(v) ? (sum - t) + v : (v - t) + sum;
    sum = t;
  }
  return (sum + carry) / static_cast<double>(data.rows());
}

double box_volume(const target::BoxIndicator& box, const Domain& domain) {
  std::vector<double> lo(domain.lower());
  std::vector<double> hi(domain.upper());
  for (const auto& p : box.predicates) {
    check_attr(p.attr, domain.dim());
    if (p.bound == Predicate::Bound::Upper) {
      hi[p.attr] = std::min(hi[p.attr], p.value);
    } else {
      lo[p.attr] = std::max(lo[p.attr], p.value);
    }
  }
  double vol = 1.0;
  for (std::size_t j = 0; j < domain.dim(); ++j) {
    vol *= std::max(0.0, hi[j] - lo[j]) / (domain.upper()[j] - domain.lower()[j]);
  }
  return vol;
}

target::BoxIndicator parse_predicates(std::string_view text, std::size_t d) {
  return parse_predicates_at(text, 0, d);
}

Query parse_query(std::string_view text, std::size_t d) {
  Scanner sc(text);
  sc.skip_ws();
  const std::size_t start = sc.pos();
  std::string head = sc.word();
  std::transform(head.begin(), head.end(), head.begin(), [](unsigned char c) { return std::tolower(c); });
  Query q;
  q.text = std::string(text);
  if (head == "moment") {
    const std::size_t at = (sc.skip_ws(), sc.pos());
    const std::size_t j = sc.integer("an attribute number");
    if (j == 0 || j > d) sc.fail_at(at, "attribute " + std::to_string(j) + " does not exist (d = " + std::to_string(d) + ")");
    const std::size_t at_k = (sc.skip_ws(), sc.pos());
    const std::size_t k = sc.integer("a moment order");
    if (k == 0) sc.fail_at(at_k, "moment order must be at least 1");
    if (!sc.at_end()) sc.fail("unexpected trailing input");
    q.target = target::Moment{j - 1, static_cast<unsigned>(k)};
    return q;
  }
  if (head == "cdf") {
    const std::size_t at = (sc.skip_ws(), sc.pos());
    const std::size_t j = sc.integer("an attribute number");
    if (j == 0 || j > d) sc.fail_at(at, "attribute " + std::to_string(j) + " does not exist (d = " + std::to_string(d) + ")");
    if (!sc.at_end()) sc.fail("unexpected trailing input");
    q.kind = Query::Kind::Cdf;
    q.attr = j - 1;
    q.target = target::CdfThreshold{j - 1, 0.0};
    return q;
  }
  if (head == "cov") {
    if (!sc.at_end()) sc.fail("unexpected trailing input");
    q.kind = Query::Kind::Covariance;
    q.target = target::Moment{0, 1};
    return q;
  }
  if (head == "count") {
    q.target = parse_predicates_at(text, sc.pos(), d);
    return q;
  }
  sc.fail_at(start, head.empty() ? "expected a target (moment, count, cdf or cov)"
                                 : "unknown target '" + head + "' (expected moment, count, cdf or cov)");
}

}  // namespace m2m
