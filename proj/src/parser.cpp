#include "ilysa/parser.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace ilysa {

ParseFailure::ParseFailure(std::string path, std::vector<ParseError> errors)
    : Error([&] {
          std::string msg;
          for (const auto& e : errors) {
              if (!msg.empty()) msg += "\n";
              msg += path.empty() ? std::string("<input>") : path;
              if (e.line > 0) msg += ":" + std::to_string(e.line) + ":" + std::to_string(e.column);
              msg += ": " + e.message;
          }
          return msg;
      }()),
      path_(std::move(path)),
      errors_(std::move(errors))
{
}

namespace {

enum class Tok { ident, integer, string, punct, end };

struct Token {
    Tok kind;
    std::string text;
    std::int64_t value = 0;
    int line = 1;
    int column = 1;
};

struct SyntaxError {
    int line;
    int column;
    std::string message;
};

std::vector<Token> lex(const std::string& src)
{
    std::vector<Token> out;
    std::size_t i = 0;
    int line = 1;
    int col = 1;
    auto advance = [&](std::size_t n) {
        for (std::size_t k = 0; k < n && i < src.size(); ++k, ++i) {
            if (src[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
    };
    static const char* puncts[] = {"->", ":=", "!=", ">=", "<=", "{", "}", "(", ")", "[", "]", ",", ";",
                                   ".",  "#",  "/",  "=",  ">",  "<", "+", "-", "*"};
    while (i < src.size()) {
        char c = src[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            advance(1);
            continue;
        }
        if (c == '/' && i + 1 < src.size() && src[i + 1] == '/') {
            while (i < src.size() && src[i] != '\n') advance(1);
            continue;
        }
        Token t{Tok::end, "", 0, line, col};
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t j = i;
            while (j < src.size() && (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_')) ++j;
            while (j < src.size() && src[j] == '\'') ++j;
            t.kind = Tok::ident;
            t.text = src.substr(i, j - i);
            advance(j - i);
            out.push_back(t);
            continue;
        }
        if (std::isdigit(static_cast<unsigned char>(c))) {
            std::size_t j = i;
            while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
            t.kind = Tok::integer;
            t.text = src.substr(i, j - i);
            auto [p, ec] = std::from_chars(src.data() + i, src.data() + j, t.value);
            if (ec != std::errc()) throw SyntaxError{line, col, "integer literal out of range"};
            advance(j - i);
            out.push_back(t);
            continue;
        }
        if (c == '"') {
            std::string s;
            std::size_t j = i + 1;
            bool closed = false;
            while (j < src.size()) {
                if (src[j] == '"') {
                    closed = true;
                    break;
                }
                if (src[j] == '\n') break;
                if (src[j] == '\\' && j + 1 < src.size()) {
                    char e = src[j + 1];
                    if (e == 'n') s += '\n';
                    else if (e == '"' || e == '\\') s += e;
                    else throw SyntaxError{line, col, "bad escape in string literal"};
                    j += 2;
                    continue;
                }
                s += src[j++];
            }
            if (!closed) throw SyntaxError{line, col, "unterminated string literal"};
            t.kind = Tok::string;
            t.text = s;
            advance(j + 1 - i);
            out.push_back(t);
            continue;
        }
        bool matched = false;
        for (const char* p : puncts) {
            std::size_t n = std::char_traits<char>::length(p);
            if (src.compare(i, n, p) == 0) {
                t.kind = Tok::punct;
                t.text = p;
                advance(n);
                out.push_back(t);
                matched = true;
                break;
            }
        }
        if (!matched) {
            std::string shown = std::isprint(static_cast<unsigned char>(c))
                                    ? std::string("'") + c + "'"
                                    : "byte 0x" + [&] {
                                          std::ostringstream o;
                                          o << std::hex << static_cast<int>(static_cast<unsigned char>(c));
                                          return o.str();
                                      }();
            throw SyntaxError{line, col, "unexpected character " + shown};
        }
    }
    out.push_back(Token{Tok::end, "", 0, line, col});
    return out;
}

const std::set<std::string>& reserved()
{
    static const std::set<std::string> words = {"mu",   "tau", "probe", "out", "to",   "in",    "decrypt",
                                                "as",   "if",  "then",  "else", "act", "await", "do",
                                                "true", "false", "and", "or"};
    return words;
}

const Ident hole_name = "<hole>";

class Parser {
public:
    explicit Parser(const std::string& text) : toks_(lex(text)) {}

    System system()
    {
        System sys;
        expect_word("system");
        if (peek().kind == Tok::ident && !is_punct("{")) sys.name = ident("system name");
        expect("{");
        while (!is_punct("}")) {
            if (peek().kind == Tok::end) fail("unexpected end of input, expected '}'");
            std::string w = peek().text;
            if (peek().kind != Tok::ident) fail("expected a declaration or a node");
            if (w == "node")
                sys.nodes.push_back(node());
            else
                declaration(sys.preamble);
        }
        expect("}");
        if (peek().kind != Tok::end) fail("trailing input after system");
        return sys;
    }

    TermPtr standalone_term()
    {
        auto t = term();
        if (peek().kind != Tok::end) fail("trailing input after term");
        return t;
    }

private:
    std::vector<Token> toks_;
    std::size_t pos_ = 0;
    std::map<Ident, int> arities_;
    bool check_arity_ = false;

    const Token& peek(std::size_t k = 0) const { return toks_[std::min(pos_ + k, toks_.size() - 1)]; }
    Token next() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }

    [[noreturn]] void fail(const std::string& msg, const Token* at = nullptr) const
    {
        const Token& t = at ? *at : peek();
        throw SyntaxError{t.line, t.column, msg + describe(t)};
    }

    static std::string describe(const Token& t)
    {
        switch (t.kind) {
        case Tok::end: return " (at end of input)";
        case Tok::string: return " (at string literal)";
        default: return " (at '" + t.text + "')";
        }
    }

    bool is_punct(const char* p, std::size_t k = 0) const { return peek(k).kind == Tok::punct && peek(k).text == p; }
    bool is_word(const char* w, std::size_t k = 0) const { return peek(k).kind == Tok::ident && peek(k).text == w; }

    void expect(const char* p)
    {
        if (!is_punct(p)) fail(std::string("expected '") + p + "'");
        next();
    }
    void expect_word(const char* w)
    {
        if (!is_word(w)) fail(std::string("expected '") + w + "'");
        next();
    }
    bool accept(const char* p)
    {
        if (!is_punct(p)) return false;
        next();
        return true;
    }
    bool accept_word(const char* w)
    {
        if (!is_word(w)) return false;
        next();
        return true;
    }

    Ident ident(const char* what)
    {
        if (peek().kind != Tok::ident || reserved().count(peek().text)) fail(std::string("expected ") + what);
        return next().text;
    }

    int integer(const char* what)
    {
        if (peek().kind != Tok::integer) fail(std::string("expected ") + what);
        auto v = next().value;
        if (v > 1'000'000'000) fail("identifier number too large");
        return static_cast<int>(v);
    }

    std::vector<Ident> ident_list(const char* what, const char* close)
    {
        std::vector<Ident> out;
        if (is_punct(close)) return out;
        do out.push_back(ident(what));
        while (accept(","));
        return out;
    }

    Ident key_subscript()
    {
        // `}_k` lexes as `}` followed by the identifier `_k`.
        if (peek().kind != Tok::ident || peek().text.size() < 2 || peek().text[0] != '_')
            fail("expected key subscript '_k'");
        return next().text.substr(1);
    }

    // ---- preamble ----

    void declaration(Preamble& pre)
    {
        Token head = next();
        const std::string& w = head.text;
        if (w == "fun") {
            FunctionDecl f;
            f.name = ident("function name");
            expect("/");
            f.arity = integer("arity");
            if (accept("=")) {
                expect_word("tagtest");
                expect("(");
                f.kind = EvaluatorKind::tagtest;
                f.tags = ident_list("atom", ")");
                expect(")");
            }
            if (builtin_arity(f.name)) fail("function " + f.name + " redeclares a builtin", &head);
            arities_[f.name] = f.arity;
            pre.functions.push_back(std::move(f));
        } else if (w == "key") {
            auto ks = ident_list("key name", ";");
            pre.keys.insert(pre.keys.end(), ks.begin(), ks.end());
        } else if (w == "comp") {
            if (accept_word("all")) {
                pre.comp.all = true;
            } else {
                pre.comp.all = false;
                pre.comp.allowed = edge_set();
            }
            if (accept_word("except")) pre.comp.removed = edge_set();
        } else if (w == "script") {
            SensorRef ref = sensor_ref();
            expect("=");
            expect("[");
            std::vector<Literal> vs;
            if (!is_punct("]")) {
                do vs.push_back(literal());
                while (accept(","));
            }
            expect("]");
            pre.scripts[ref] = std::move(vs);
        } else if (w == "scriptmode") {
            if (accept_word("cycle")) pre.script_mode = ScriptMode::cycle;
            else if (accept_word("hold")) pre.script_mode = ScriptMode::hold;
            else if (accept_word("stuck")) pre.script_mode = ScriptMode::stuck;
            else fail("expected cycle, hold or stuck");
        } else if (w == "policy") {
            expect("{");
            while (!accept("}")) policy_item(pre.policy);
            accept(";");
            return;
        } else {
            fail("unknown declaration '" + w + "'", &head);
        }
        expect(";");
    }

    SensorRef sensor_ref()
    {
        SensorRef r;
        r.node = ident("node label");
        expect("#");
        r.id = integer("sensor id");
        return r;
    }

    std::set<Edge> edge_set()
    {
        std::set<Edge> out;
        expect("{");
        if (!is_punct("}")) {
            do {
                Label a = ident("node label");
                expect("->");
                Label b = ident("node label");
                out.insert({a, b});
            } while (accept(","));
        }
        expect("}");
        return out;
    }

    std::set<Label> label_set()
    {
        expect("{");
        auto ls = ident_list("node label", "}");
        expect("}");
        return {ls.begin(), ls.end()};
    }

    void policy_item(PolicyConfig& pol)
    {
        Token head = next();
        const std::string& w = head.text;
        if (head.kind != Tok::ident) fail("expected a policy entry", &head);
        if (w == "secret" || w == "confined") {
            auto& set = w == "secret" ? pol.secret : pol.confined;
            do set.insert(sensor_ref());
            while (accept(","));
        } else if (w == "anonymisers") {
            auto fs = ident_list("function name", ";");
            pol.anonymisers.insert(fs.begin(), fs.end());
        } else if (w == "subsystem") {
            pol.subsystem = label_set();
        } else if (w == "level") {
            Label l = ident("node label");
            expect("=");
            bool neg = accept("-");
            int v = integer("level");
            pol.levels[l] = neg ? -v : v;
        } else if (w == "flow") {
            Label l = ident("node label");
            expect("->");
            if (!pol.flows) pol.flows.emplace();
            auto ts = label_set();
            (*pol.flows)[l].insert(ts.begin(), ts.end());
        } else if (w == "flows") {
            if (!pol.flows) pol.flows.emplace();
        } else {
            fail("unknown policy entry '" + w + "'", &head);
        }
        expect(";");
    }

    Literal literal()
    {
        if (accept("-")) {
            if (peek().kind != Tok::integer) fail("expected integer after '-'");
            return -next().value;
        }
        const Token& t = peek();
        if (t.kind == Tok::integer) return next().value;
        if (t.kind == Tok::string) return next().text;
        if (accept_word("true")) return true;
        if (accept_word("false")) return false;
        return Atom{ident("literal")};
    }

    // ---- nodes ----

    Node node()
    {
        expect_word("node");
        Node n;
        n.label = ident("node label");
        expect("{");
        while (!accept("}")) {
            Token head = peek();
            if (accept_word("store")) {
                expect("{");
                n.components.push_back(StoreDecl{ident_list("variable", "}")});
                expect("}");
            } else if (accept_word("proc")) {
                auto p = process(false);
                n.components.push_back(p);
            } else if (accept_word("sensor")) {
                int id = integer("sensor id");
                expect("=");
                n.components.push_back(SensorDecl{id, sensor(false)});
            } else if (accept_word("actuator")) {
                int id = integer("actuator id");
                expect("=");
                n.components.push_back(ActuatorDecl{id, actuator(false)});
            } else {
                fail("expected store, proc, sensor or actuator");
            }
            accept(";");
        }
        return n;
    }

    // ---- processes ----

    static bool is_hole(const Process& p)
    {
        auto* j = std::get_if<Process::Jump>(&p.node);
        return j && j->var == hole_name;
    }

    static bool has_hole(const Process& p)
    {
        return std::visit(
            [&](const auto& x) -> bool {
                using T = std::decay_t<decltype(x)>;
                if constexpr (std::is_same_v<T, Process::Jump>) return x.var == hole_name;
                else if constexpr (std::is_same_v<T, Process::Cond>)
                    return has_hole(*x.then_branch) || has_hole(*x.else_branch);
                else if constexpr (std::is_same_v<T, Process::Loop>) return has_hole(*x.body);
                else if constexpr (std::is_same_v<T, Process::Nil>) return false;
                else return has_hole(*x.cont);
            },
            p.node);
    }

    static ProcessPtr plug(const ProcessPtr& p, const ProcessPtr& c)
    {
        if (is_hole(*p)) return c;
        return std::visit(
            [&](const auto& x) -> ProcessPtr {
                using T = std::decay_t<decltype(x)>;
                if constexpr (std::is_same_v<T, Process::Nil> || std::is_same_v<T, Process::Jump>) return p;
                else if constexpr (std::is_same_v<T, Process::Cond>) {
                    T y = x;
                    y.then_branch = plug(x.then_branch, c);
                    y.else_branch = plug(x.else_branch, c);
                    return make_process(y);
                } else if constexpr (std::is_same_v<T, Process::Loop>) {
                    T y = x;
                    y.body = plug(x.body, c);
                    return make_process(y);
                } else {
                    T y = x;
                    y.cont = plug(x.cont, c);
                    return make_process(y);
                }
            },
            p->node);
    }

    ProcessPtr continuation(bool allow_hole)
    {
        if (accept(".")) return process(allow_hole);
        if (allow_hole && is_punct(")")) return make_process(Process::Jump{hole_name});
        fail("expected '.'");
    }

    ProcessPtr process(bool allow_hole)
    {
        Token head = peek();
        if (accept("(")) {
            auto inner = process(true);
            expect(")");
            if (accept(".")) {
                if (!has_hole(*inner)) fail("parenthesised process is already complete", &head);
                return plug(inner, process(allow_hole));
            }
            if (!allow_hole && has_hole(*inner)) fail("expected '.' after parenthesised prefix");
            return inner;
        }
        if (head.kind == Tok::integer && head.value == 0) {
            next();
            return make_process(Process::Nil{});
        }
        if (head.kind != Tok::ident) fail("expected a process");
        const std::string& w = head.text;
        if (w == "mu") {
            next();
            Ident h = ident("iteration variable");
            expect(".");
            return make_process(Process::Loop{h, process(allow_hole)});
        }
        if (w == "out") {
            next();
            expect("(");
            auto ts = term_list(")");
            expect(")");
            expect_word("to");
            expect("{");
            auto ls = ident_list("node label", "}");
            expect("}");
            return make_process(Process::Out{ts, ls, continuation(allow_hole)});
        }
        if (w == "in") {
            next();
            expect("(");
            auto ms = term_list(";");
            expect(";");
            auto xs = ident_list("variable", ")");
            expect(")");
            return make_process(Process::In{ms, xs, continuation(allow_hole)});
        }
        if (w == "if") {
            next();
            auto g = term();
            expect_word("then");
            auto p = process(allow_hole);
            expect_word("else");
            auto q = process(allow_hole);
            return make_process(Process::Cond{g, p, q});
        }
        if (w == "act") {
            next();
            expect("(");
            int j = integer("actuator id");
            expect(",");
            Ident g = ident("action");
            expect(")");
            return make_process(Process::Act{j, g, continuation(allow_hole)});
        }
        if (w == "decrypt") {
            next();
            auto subj = term();
            expect_word("as");
            expect("{");
            auto ms = term_list(";");
            expect(";");
            auto xs = ident_list("variable", "}");
            expect("}");
            Ident k = key_subscript();
            expect_word("in");
            return make_process(Process::Decrypt{subj, ms, xs, k, process(allow_hole)});
        }
        if (reserved().count(w)) fail("unexpected keyword");
        next();
        if (accept(":=")) {
            auto e = term();
            return make_process(Process::Assign{w, e, continuation(allow_hole)});
        }
        return make_process(Process::Jump{w});
    }

    // ---- sensors and actuators ----

    template <class P>
    static bool simple_has_hole(const P& p)
    {
        return std::visit(
            [](const auto& x) -> bool {
                using T = std::decay_t<decltype(x)>;
                if constexpr (std::is_same_v<T, typename P::Jump>) return x.var == hole_name;
                else if constexpr (requires { x.cont; }) return simple_has_hole(*x.cont);
                else if constexpr (requires { x.body; }) return simple_has_hole(*x.body);
                else return false;
            },
            p.node);
    }

    template <class P>
    static std::shared_ptr<const P> simple_plug(const std::shared_ptr<const P>& p, const std::shared_ptr<const P>& c)
    {
        return std::visit(
            [&](const auto& x) -> std::shared_ptr<const P> {
                using T = std::decay_t<decltype(x)>;
                if constexpr (std::is_same_v<T, typename P::Jump>) return x.var == hole_name ? c : p;
                else if constexpr (requires { x.cont; }) {
                    T y = x;
                    y.cont = simple_plug(x.cont, c);
                    return std::make_shared<P>(P{y});
                } else if constexpr (requires { x.body; }) {
                    T y = x;
                    y.body = simple_plug(x.body, c);
                    return std::make_shared<P>(P{y});
                } else
                    return p;
            },
            p->node);
    }

    template <class P, class F>
    std::shared_ptr<const P> simple_group(bool allow_hole, F&& parse_one)
    {
        Token head = peek();
        expect("(");
        auto inner = parse_one(true);
        expect(")");
        if (accept(".")) {
            if (!simple_has_hole(*inner)) fail("parenthesised component is already complete", &head);
            return simple_plug<P>(inner, parse_one(allow_hole));
        }
        if (!allow_hole && simple_has_hole(*inner)) fail("expected '.' after parenthesised prefix");
        return inner;
    }

    template <class P>
    std::shared_ptr<const P> simple_cont(bool allow_hole, std::shared_ptr<const P> (Parser::*parse_one)(bool))
    {
        if (accept(".")) return (this->*parse_one)(allow_hole);
        if (allow_hole && is_punct(")")) return std::make_shared<P>(P{typename P::Jump{hole_name}});
        fail("expected '.'");
    }

    SensorPtr sensor(bool allow_hole)
    {
        if (is_punct("(")) return simple_group<Sensor>(allow_hole, [this](bool h) { return sensor(h); });
        Token head = peek();
        if (head.kind == Tok::integer && head.value == 0) {
            next();
            return make_sensor(Sensor::Nil{});
        }
        if (accept_word("tau")) return make_sensor(Sensor::Tau{simple_cont<Sensor>(allow_hole, &Parser::sensor)});
        if (accept_word("probe")) {
            expect("(");
            expect("#");
            int i = integer("sensor id");
            expect(")");
            return make_sensor(Sensor::Probe{i, simple_cont<Sensor>(allow_hole, &Parser::sensor)});
        }
        if (accept_word("mu")) {
            Ident h = ident("iteration variable");
            expect(".");
            return make_sensor(Sensor::Loop{h, sensor(allow_hole)});
        }
        return make_sensor(Sensor::Jump{ident("sensor prefix")});
    }

    ActuatorPtr actuator(bool allow_hole)
    {
        if (is_punct("(")) return simple_group<Actuator>(allow_hole, [this](bool h) { return actuator(h); });
        Token head = peek();
        if (head.kind == Tok::integer && head.value == 0) {
            next();
            return make_actuator(Actuator::Nil{});
        }
        if (accept_word("tau"))
            return make_actuator(Actuator::Tau{simple_cont<Actuator>(allow_hole, &Parser::actuator)});
        if (accept_word("await")) {
            expect("(");
            int j = integer("actuator id");
            expect(",");
            expect("{");
            auto gs = ident_list("action", "}");
            expect("}");
            expect(")");
            return make_actuator(Actuator::Await{j, gs, simple_cont<Actuator>(allow_hole, &Parser::actuator)});
        }
        if (accept_word("do")) {
            Ident g = ident("action");
            return make_actuator(Actuator::Fire{g, simple_cont<Actuator>(allow_hole, &Parser::actuator)});
        }
        if (accept_word("mu")) {
            Ident h = ident("iteration variable");
            expect(".");
            return make_actuator(Actuator::Loop{h, actuator(allow_hole)});
        }
        return make_actuator(Actuator::Jump{ident("actuator prefix")});
    }

    // ---- terms ----

    std::vector<TermPtr> term_list(const char* close)
    {
        std::vector<TermPtr> out;
        if (is_punct(close)) return out;
        do out.push_back(term());
        while (accept(","));
        return out;
    }

    TermPtr term() { return or_term(); }

    TermPtr or_term()
    {
        auto l = and_term();
        while (accept_word("or")) l = make_app("or", {l, and_term()});
        return l;
    }

    TermPtr and_term()
    {
        auto l = cmp_term();
        while (accept_word("and")) l = make_app("and", {l, cmp_term()});
        return l;
    }

    TermPtr cmp_term()
    {
        auto l = add_term();
        for (const char* op : {"=", "!=", ">=", "<=", ">", "<"})
            if (accept(op)) return make_app(op, {l, add_term()});
        return l;
    }

    TermPtr add_term()
    {
        auto l = mul_term();
        while (true) {
            if (accept("+")) l = make_app("+", {l, mul_term()});
            else if (accept("-")) l = make_app("-", {l, mul_term()});
            else return l;
        }
    }

    TermPtr mul_term()
    {
        auto l = primary();
        while (accept("*")) l = make_app("*", {l, primary()});
        return l;
    }

    TermPtr primary()
    {
        Token head = peek();
        if (accept("-")) {
            if (peek().kind != Tok::integer) fail("expected integer after unary '-'");
            return make_value(-next().value);
        }
        if (head.kind == Tok::integer) return make_value(next().value);
        if (head.kind == Tok::string) return make_value(next().text);
        if (accept("#")) return make_sensor_loc(integer("sensor id"));
        if (accept("(")) {
            auto t = term();
            expect(")");
            return t;
        }
        if (accept("{")) {
            auto ts = term_list("}");
            expect("}");
            return make_enc(ts, key_subscript());
        }
        if (accept_word("true")) return make_value(true);
        if (accept_word("false")) return make_value(false);
        Ident name = ident("term");
        if (accept("(")) {
            auto args = term_list(")");
            expect(")");
            if (check_arity_) {
                int want = 0;
                if (auto b = builtin_arity(name)) want = *b;
                else if (auto it = arities_.find(name); it != arities_.end()) want = it->second;
                else fail("undeclared function " + name, &head);
                if (want != static_cast<int>(args.size()))
                    fail("arity mismatch for " + name + ": expected " + std::to_string(want) + ", got " +
                             std::to_string(args.size()),
                         &head);
            }
            return make_app(name, args);
        }
        return make_var(name);
    }

public:
    void enable_arity_check() { check_arity_ = true; }
};

// Identifiers that are not store variables of the node are opaque atoms.
TermPtr resolve(const TermPtr& t, const std::set<Ident>& vars)
{
    return std::visit(
        [&](const auto& x) -> TermPtr {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, Term::Var>) return vars.count(x.name) ? t : make_value(Atom{x.name});
            else if constexpr (std::is_same_v<T, Term::App> || std::is_same_v<T, Term::Enc>) {
                T y = x;
                for (auto& a : y.args) a = resolve(a, vars);
                return std::make_shared<Term>(Term{y});
            } else
                return t;
        },
        t->node);
}

std::vector<TermPtr> resolve(const std::vector<TermPtr>& ts, const std::set<Ident>& vars)
{
    std::vector<TermPtr> out;
    for (const auto& t : ts) out.push_back(resolve(t, vars));
    return out;
}

ProcessPtr resolve(const ProcessPtr& p, const std::set<Ident>& vars)
{
    return std::visit(
        [&](const auto& x) -> ProcessPtr {
            using T = std::decay_t<decltype(x)>;
            T y = x;
            if constexpr (std::is_same_v<T, Process::Nil> || std::is_same_v<T, Process::Jump>) return p;
            else if constexpr (std::is_same_v<T, Process::Out>) {
                y.terms = resolve(x.terms, vars);
                y.cont = resolve(x.cont, vars);
            } else if constexpr (std::is_same_v<T, Process::In>) {
                y.match = resolve(x.match, vars);
                y.cont = resolve(x.cont, vars);
            } else if constexpr (std::is_same_v<T, Process::Cond>) {
                y.guard = resolve(x.guard, vars);
                y.then_branch = resolve(x.then_branch, vars);
                y.else_branch = resolve(x.else_branch, vars);
            } else if constexpr (std::is_same_v<T, Process::Loop>) {
                y.body = resolve(x.body, vars);
            } else if constexpr (std::is_same_v<T, Process::Assign>) {
                y.rhs = resolve(x.rhs, vars);
                y.cont = resolve(x.cont, vars);
            } else if constexpr (std::is_same_v<T, Process::Act>) {
                y.cont = resolve(x.cont, vars);
            } else {
                y.subject = resolve(x.subject, vars);
                y.match = resolve(x.match, vars);
                y.cont = resolve(x.cont, vars);
            }
            return make_process(y);
        },
        p->node);
}

System parse_raw(const SourceSpec& src)
{
    try {
        Parser p(src.text);
        p.enable_arity_check();
        System sys = p.system();
        for (auto& n : sys.nodes) {
            auto info = node_info(n);
            std::set<Ident> vars(info.vars.begin(), info.vars.end());
            for (auto& c : n.components)
                if (auto* proc = std::get_if<ProcessPtr>(&c)) *proc = resolve(*proc, vars);
        }
        return sys;
    } catch (const SyntaxError& e) {
        throw ParseFailure(src.path, {{e.line, e.column, e.message}});
    }
}

}  // namespace

System parse_system_unchecked(const SourceSpec& src) { return parse_raw(src); }

System parse_system(const SourceSpec& src)
{
    System sys = parse_raw(src);
    auto diags = well_formed(sys);
    if (!diags.empty()) {
        std::vector<ParseError> errs;
        for (const auto& d : diags) errs.push_back({0, 0, d.where + ": " + d.message});
        throw ParseFailure(src.path, errs);
    }
    return sys;
}

TermPtr parse_term(const std::string& text)
{
    try {
        Parser p(text);
        return p.standalone_term();
    } catch (const SyntaxError& e) {
        throw ParseFailure("", {{e.line, e.column, e.message}});
    }
}

System load_system(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_system({ss.str(), path});
}

}  // namespace ilysa
