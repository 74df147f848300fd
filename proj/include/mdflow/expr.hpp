#ifndef MDFLOW_EXPR_HPP
#define MDFLOW_EXPR_HPP

#include <map>
#include <memory>
#include <set>
#include <string>
#include <string_view>

namespace mdf {

using Bindings = std::map<std::string, double, std::less<>>;

/**
 * Arithmetic/boolean expression over named measures.
 *
 *   or   := and (("or" | "||") and)*
 *   and  := not (("and" | "&&") not)*
 *   not  := ("not" | "!") not | cmp
 *   cmp  := sum (("<" | "<=" | ">" | ">=" | "==" | "!=") sum)?
 *   sum  := prod (("+" | "-") prod)*
 *   prod := unary (("*" | "/") unary)*
 *   unary:= "-" unary | atom
 *   atom := number | "true" | "false" | name | fn "(" or ("," or)* ")" | "(" or ")"
 *   fn   := min | max | abs
 *
 * Booleans are 1 and 0; a value holds when it is non-zero.
 */
class Expr {
public:
    struct Node;

    /** Throws Parse. */
    static Expr parse(std::string_view text);

    /** Throws UnmonitorableVariable when a variable has no binding. */
    double eval(const Bindings &b) const;
    bool holds(const Bindings &b) const { return eval(b) != 0.0; }

    const std::set<std::string> &variables() const { return vars_; }
    const std::string &text() const { return text_; }

private:
    std::shared_ptr<const Node> root_;
    std::set<std::string> vars_;
    std::string text_;
};

} // namespace mdf

#endif // MDFLOW_EXPR_HPP
