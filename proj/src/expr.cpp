#include "mdflow/expr.hpp"
#include "mdflow/error.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <vector>

namespace mdf {

struct Expr::Node {
    enum class Kind { Num, Var, Neg, Not, Bin, Call };
    Kind kind = Kind::Num;
    double num = 0;
    std::string name;  // variable, operator or function
    std::vector<std::shared_ptr<const Node>> kids;
};

namespace {

using NodePtr = std::shared_ptr<const Expr::Node>;
using Kind = Expr::Node::Kind;

NodePtr make(Kind k, std::string name, std::vector<NodePtr> kids = {}, double num = 0) {
    auto n = std::make_shared<Expr::Node>();
    n->kind = k;
    n->name = std::move(name);
    n->kids = std::move(kids);
    n->num = num;
    return n;
}

class Parser {
public:
    Parser(std::string_view s, std::set<std::string> &vars) : s_(s), vars_(vars) {}

    NodePtr parse_all() {
        auto n = parse_or();
        skip_ws();
        if (pos_ != s_.size())
            fail("unexpected '" + std::string(s_.substr(pos_, 1)) + "'");
        return n;
    }

private:
    NodePtr parse_or() {
        auto lhs = parse_and();
        while (accept_word("or") || accept("||"))
            lhs = make(Kind::Bin, "or", {lhs, parse_and()});
        return lhs;
    }

    NodePtr parse_and() {
        auto lhs = parse_not();
        while (accept_word("and") || accept("&&"))
            lhs = make(Kind::Bin, "and", {lhs, parse_not()});
        return lhs;
    }

    NodePtr parse_not() {
        if (accept_word("not") || (peek() == '!' && peek(1) != '=' && accept("!")))
            return make(Kind::Not, "not", {parse_not()});
        return parse_cmp();
    }

    NodePtr parse_cmp() {
        auto lhs = parse_sum();
        for (const char *op : {"<=", ">=", "==", "!=", "<", ">"})
            if (accept(op))
                return make(Kind::Bin, op, {lhs, parse_sum()});
        return lhs;
    }

    NodePtr parse_sum() {
        auto lhs = parse_prod();
        for (;;) {
            if (accept("+"))
                lhs = make(Kind::Bin, "+", {lhs, parse_prod()});
            else if (accept("-"))
                lhs = make(Kind::Bin, "-", {lhs, parse_prod()});
            else
                return lhs;
        }
    }

    NodePtr parse_prod() {
        auto lhs = parse_unary();
        for (;;) {
            if (accept("*"))
                lhs = make(Kind::Bin, "*", {lhs, parse_unary()});
            else if (accept("/"))
                lhs = make(Kind::Bin, "/", {lhs, parse_unary()});
            else
                return lhs;
        }
    }

    NodePtr parse_unary() {
        if (accept("-"))
            return make(Kind::Neg, "-", {parse_unary()});
        return parse_atom();
    }

    NodePtr parse_atom() {
        skip_ws();
        if (accept("(")) {
            auto n = parse_or();
            expect(")");
            return n;
        }
        char c = peek();
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.')
            return number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::string id = ident();
            if (id == "true")
                return make(Kind::Num, {}, {}, 1);
            if (id == "false")
                return make(Kind::Num, {}, {}, 0);
            if (accept("(")) {
                if (id != "min" && id != "max" && id != "abs")
                    fail("unknown function '" + id + "'");
                std::vector<NodePtr> args{parse_or()};
                while (accept(","))
                    args.push_back(parse_or());
                expect(")");
                if (id == "abs" && args.size() != 1)
                    fail("abs takes one argument");
                return make(Kind::Call, id, std::move(args));
            }
            vars_.insert(id);
            return make(Kind::Var, id);
        }
        fail(pos_ < s_.size() ? "unexpected '" + std::string(1, c) + "'" : "unexpected end");
    }

    NodePtr number() {
        auto start = pos_;
        while (pos_ < s_.size() &&
               (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.' || s_[pos_] == 'e' ||
                s_[pos_] == 'E' ||
                ((s_[pos_] == '+' || s_[pos_] == '-') && (s_[pos_ - 1] == 'e' || s_[pos_ - 1] == 'E'))))
            ++pos_;
        double v = 0;
        auto [ptr, ec] = std::from_chars(s_.data() + start, s_.data() + pos_, v);
        if (ec != std::errc() || ptr != s_.data() + pos_)
            fail("bad number '" + std::string(s_.substr(start, pos_ - start)) + "'");
        return make(Kind::Num, {}, {}, v);
    }

    std::string ident() {
        auto start = pos_;
        while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
            ++pos_;
        return std::string(s_.substr(start, pos_ - start));
    }

    char peek(std::size_t ahead = 0) {
        skip_ws();
        return pos_ + ahead < s_.size() ? s_[pos_ + ahead] : '\0';
    }

    bool accept(std::string_view lit) {
        skip_ws();
        if (s_.substr(pos_, lit.size()) != lit)
            return false;
        pos_ += lit.size();
        return true;
    }

    bool accept_word(std::string_view word) {
        skip_ws();
        if (s_.substr(pos_, word.size()) != word)
            return false;
        auto end = pos_ + word.size();
        if (end < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[end])) || s_[end] == '_'))
            return false;
        pos_ = end;
        return true;
    }

    void expect(std::string_view lit) {
        if (!accept(lit))
            fail("expected '" + std::string(lit) + "'");
    }

    void skip_ws() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_])))
            ++pos_;
    }

    [[noreturn]] void fail(const std::string &what) const {
        throw Error(Errc::Parse, "expression at " + std::to_string(pos_) + ": " + what);
    }

    std::string_view s_;
    std::set<std::string> &vars_;
    std::size_t pos_ = 0;
};

double eval_node(const Expr::Node &n, const Bindings &b) {
    switch (n.kind) {
    case Kind::Num:
        return n.num;
    case Kind::Var: {
        auto it = b.find(n.name);
        if (it == b.end())
            throw Error(Errc::UnmonitorableVariable, "no value for '" + n.name + "'");
        return it->second;
    }
    case Kind::Neg:
        return -eval_node(*n.kids[0], b);
    case Kind::Not:
        return eval_node(*n.kids[0], b) == 0.0 ? 1.0 : 0.0;
    case Kind::Call: {
        if (n.name == "abs")
            return std::fabs(eval_node(*n.kids[0], b));
        double acc = eval_node(*n.kids[0], b);
        for (std::size_t i = 1; i < n.kids.size(); ++i) {
            double v = eval_node(*n.kids[i], b);
            acc = n.name == "min" ? std::min(acc, v) : std::max(acc, v);
        }
        return acc;
    }
    case Kind::Bin:
        break;
    }
    const auto &op = n.name;
    double l = eval_node(*n.kids[0], b);
    if (op == "and")
        return l != 0.0 && eval_node(*n.kids[1], b) != 0.0 ? 1.0 : 0.0;
    if (op == "or")
        return l != 0.0 || eval_node(*n.kids[1], b) != 0.0 ? 1.0 : 0.0;
    double r = eval_node(*n.kids[1], b);
    if (op == "+")
        return l + r;
    if (op == "-")
        return l - r;
    if (op == "*")
        return l * r;
    if (op == "/")
        return l / r;
    if (op == "<")
        return l < r;
    if (op == "<=")
        return l <= r;
    if (op == ">")
        return l > r;
    if (op == ">=")
        return l >= r;
    if (op == "==")
        return l == r;
    return l != r;
}

} // namespace

Expr Expr::parse(std::string_view text) {
    Expr e;
    e.root_ = Parser(text, e.vars_).parse_all();
    e.text_ = std::string(text);
    return e;
}

double Expr::eval(const Bindings &b) const {
    if (!root_)
        throw Error(Errc::Parse, "empty expression");
    return eval_node(*root_, b);
}

} // namespace mdf
