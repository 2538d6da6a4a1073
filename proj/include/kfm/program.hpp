#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "kfm/closure.hpp"
#include "kfm/formula.hpp"
#include "kfm/ifp.hpp"
#include "kfm/refine.hpp"
#include "kfm/structure.hpp"

namespace kfm {

// A program acts on r-tuples of a structure. Tests theta_i are inflationary
// fixed points over the auxiliary symbol X; their limits are exposed to the
// test sentences phi_j as relations X0..X{N-1}. Each test vector sigma picks
// a rule: psi (auxiliary symbol Y) delimits the active tuples, xi (witness
// variables y0.., request variables z0..) decides which of them still
// request attention.
struct SigmaRule {
    ExpandedFormula psi;
    Formula xi;
};

struct ProgramSpec {
    int r = 0;
    int y_arity = 0;
    std::vector<ExpandedFormula> theta;
    std::vector<Formula> phi;
    std::vector<std::string> pi_types;  // declared qf types, a-priori order
    std::map<std::string, SigmaRule> sigma_rules;
};

// A command answers every request of one qf type: E (variables u0.., v0..)
// identifies responses up to an equivalence on r-tuples of the world, chi
// (variables a0.. acted, c0.. request, b0.. response) enumerates them.
struct CommandRule {
    Formula eq;
    Formula chi;
};

struct CommandTable {
    std::map<std::pair<std::string, int>, CommandRule> rules;

    const CommandRule& rule_for(const std::string& sigma, int pi_index) const {
        auto it = rules.find({sigma, pi_index});
        if (it == rules.end())
            throw std::runtime_error("no command for sigma " + sigma + " pi " +
                                     std::to_string(pi_index));
        return it->second;
    }
};

struct Program {
    ProgramSpec spec;
    CommandTable commands;
};

namespace detail {

inline std::string test_symbol(int i) { return "X" + std::to_string(i); }

inline std::string numbered(const char* stem, int i) { return stem + std::to_string(i); }

inline std::set<std::string> variable_pool(const char* stem, int n) {
    std::set<std::string> pool;
    for (int i = 0; i < n; ++i) pool.insert(numbered(stem, i));
    return pool;
}

inline void check_vars_within(const Formula& f, const std::set<std::string>& allowed,
                              const std::string& what, int lineno) {
    for (const auto& v : free_variables(f))
        if (!allowed.count(v)) throw ParseError(lineno, what + " uses unexpected variable " + v);
}

inline Formula parse_formula_at(const std::string& text, int lineno) {
    try {
        return parse_formula(text);
    } catch (const ParseError& e) {
        throw ParseError(lineno, e.what());
    } catch (const std::exception& e) {
        throw ParseError(lineno, e.what());
    }
}

}  // namespace detail

// Program files: comment and blank lines anywhere, header lines "r <arity>"
// and "y <arity>", then sections. [theta] and [phi] hold "theta:"/"phi:"
// formula lines, [pi] holds "pi: <qf type>" lines fixing the a-priori type
// order, [sigma <bits>] holds "psi:"/"xi:" lines, [command <bits> <pi index>]
// holds "E:"/"chi:" lines.
inline Program parse_program(const std::string& text) {
    enum class Sec { None, Theta, Phi, Pi, Sigma, Command };
    std::istringstream in(text);
    std::string raw;
    int lineno = 0;
    Program prog;
    ProgramSpec& spec = prog.spec;
    int r = -1, y = -1;
    Sec sec = Sec::None;
    std::string sec_sigma;
    int sec_pi = -1;
    bool sec_has_psi = false, sec_has_xi = false, sec_has_eq = false, sec_has_chi = false;
    int sec_line = 0;
    std::vector<std::pair<std::pair<std::string, int>, int>> command_lines;

    auto close_section = [&]() {
        if (sec == Sec::Sigma && !(sec_has_psi && sec_has_xi))
            throw ParseError(sec_line, "sigma section needs both psi: and xi:");
        if (sec == Sec::Command && !(sec_has_eq && sec_has_chi))
            throw ParseError(sec_line, "command section needs both E: and chi:");
    };

    while (std::getline(in, raw)) {
        ++lineno;
        std::string line = raw.substr(0, raw.find('#'));
        auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        auto last = line.find_last_not_of(" \t\r");
        line = line.substr(first, last - first + 1);

        if (line.front() == '[') {
            if (line.back() != ']') throw ParseError(lineno, "unterminated section header");
            std::istringstream hdr(line.substr(1, line.size() - 2));
            std::string kind;
            hdr >> kind;
            close_section();
            sec_has_psi = sec_has_xi = sec_has_eq = sec_has_chi = false;
            sec_line = lineno;
            if (r < 1 || y < 0) throw ParseError(lineno, "r and y headers must precede sections");
            if (kind == "theta") {
                sec = Sec::Theta;
            } else if (kind == "phi") {
                sec = Sec::Phi;
            } else if (kind == "pi") {
                sec = Sec::Pi;
            } else if (kind == "sigma") {
                std::string bits;
                if (!(hdr >> bits) || bits.find_first_not_of("01") != std::string::npos)
                    throw ParseError(lineno, "expected: [sigma <bits>]");
                if (spec.sigma_rules.count(bits)) throw ParseError(lineno, "duplicate sigma section " + bits);
                sec = Sec::Sigma;
                sec_sigma = bits;
            } else if (kind == "command") {
                std::string bits;
                int idx = -1;
                if (!(hdr >> bits >> idx) || bits.find_first_not_of("01") != std::string::npos || idx < 0)
                    throw ParseError(lineno, "expected: [command <bits> <pi index>]");
                if (prog.commands.rules.count({bits, idx}))
                    throw ParseError(lineno, "duplicate command section");
                sec = Sec::Command;
                sec_sigma = bits;
                sec_pi = idx;
                prog.commands.rules[{bits, idx}] = CommandRule{};
                command_lines.push_back({{bits, idx}, lineno});
            } else {
                throw ParseError(lineno, "unknown section: " + kind);
            }
            std::string extra;
            if (hdr >> extra) throw ParseError(lineno, "trailing tokens in section header");
            continue;
        }

        if (sec == Sec::None) {
            std::istringstream hdr(line);
            std::string key;
            int value = -1;
            hdr >> key;
            if ((key != "r" && key != "y") || !(hdr >> value) || value < 0)
                throw ParseError(lineno, "expected: r <arity> or y <arity>");
            if (key == "r") {
                if (value < 1) throw ParseError(lineno, "r must be positive");
                r = spec.r = value;
            } else {
                y = spec.y_arity = value;
            }
            continue;
        }

        auto colon = line.find(':');
        if (colon == std::string::npos) throw ParseError(lineno, "expected: <label>: <content>");
        std::string label = line.substr(0, colon);
        std::string rest = line.substr(colon + 1);
        auto rf = rest.find_first_not_of(" \t");
        rest = rf == std::string::npos ? std::string() : rest.substr(rf);
        if (rest.empty()) throw ParseError(lineno, "empty content after " + label + ":");

        if (sec == Sec::Theta) {
            if (label != "theta") throw ParseError(lineno, "expected theta: in [theta]");
            try {
                spec.theta.push_back(make_expanded(detail::parse_formula_at(rest, lineno), r, "X", true));
            } catch (const ParseError&) {
                throw;
            } catch (const std::exception& e) {
                throw ParseError(lineno, e.what());
            }
        } else if (sec == Sec::Phi) {
            if (label != "phi") throw ParseError(lineno, "expected phi: in [phi]");
            Formula f = detail::parse_formula_at(rest, lineno);
            if (!free_variables(f).empty()) throw ParseError(lineno, "test sentences must be closed");
            spec.phi.push_back(std::move(f));
        } else if (sec == Sec::Pi) {
            if (label != "pi") throw ParseError(lineno, "expected pi: in [pi]");
            if (rest.find_first_of(" \t") != std::string::npos)
                throw ParseError(lineno, "qf type must be a single token");
            if (std::find(spec.pi_types.begin(), spec.pi_types.end(), rest) != spec.pi_types.end())
                throw ParseError(lineno, "duplicate pi type");
            spec.pi_types.push_back(rest);
        } else if (sec == Sec::Sigma) {
            SigmaRule& rule = spec.sigma_rules[sec_sigma];
            if (label == "psi") {
                if (sec_has_psi) throw ParseError(lineno, "duplicate psi:");
                try {
                    rule.psi = make_expanded(detail::parse_formula_at(rest, lineno), r, "Y", true);
                } catch (const ParseError&) {
                    throw;
                } catch (const std::exception& e) {
                    throw ParseError(lineno, e.what());
                }
                sec_has_psi = true;
            } else if (label == "xi") {
                if (sec_has_xi) throw ParseError(lineno, "duplicate xi:");
                rule.xi = detail::parse_formula_at(rest, lineno);
                std::set<std::string> allowed = detail::variable_pool("y", y);
                for (const auto& v : detail::variable_pool("z", r)) allowed.insert(v);
                detail::check_vars_within(rule.xi, allowed, "xi", lineno);
                sec_has_xi = true;
            } else {
                throw ParseError(lineno, "expected psi: or xi: in [sigma]");
            }
        } else {
            CommandRule& rule = prog.commands.rules[{sec_sigma, sec_pi}];
            if (label == "E") {
                if (sec_has_eq) throw ParseError(lineno, "duplicate E:");
                rule.eq = detail::parse_formula_at(rest, lineno);
                std::set<std::string> allowed = detail::variable_pool("u", r);
                for (const auto& v : detail::variable_pool("v", r)) allowed.insert(v);
                detail::check_vars_within(rule.eq, allowed, "E", lineno);
                sec_has_eq = true;
            } else if (label == "chi") {
                if (sec_has_chi) throw ParseError(lineno, "duplicate chi:");
                rule.chi = detail::parse_formula_at(rest, lineno);
                std::set<std::string> allowed = detail::variable_pool("a", r);
                for (const auto& v : detail::variable_pool("c", r)) allowed.insert(v);
                for (const auto& v : detail::variable_pool("b", r)) allowed.insert(v);
                detail::check_vars_within(rule.chi, allowed, "chi", lineno);
                sec_has_chi = true;
            } else {
                throw ParseError(lineno, "expected E: or chi: in [command]");
            }
        }
    }
    close_section();

    if (r < 1) throw ParseError(lineno, "missing r header");
    if (y < 0) throw ParseError(lineno, "missing y header");
    for (const auto& [bits, rule] : spec.sigma_rules)
        if (bits.size() != spec.phi.size())
            throw ParseError(lineno, "sigma " + bits + " does not match the number of test sentences");
    for (const auto& [key, line] : command_lines) {
        if (key.first.size() != spec.phi.size())
            throw ParseError(line, "command sigma " + key.first + " does not match the number of test sentences");
        if (key.second >= static_cast<int>(spec.pi_types.size()))
            throw ParseError(line, "command pi index " + std::to_string(key.second) + " is not declared");
    }
    return prog;
}

// The test expansion: A extended by each theta fixed point as a relation
// X0..X{N-1} of arity r.
inline FiniteStructure build_test_structure(const FiniteStructure& a, const ProgramSpec& spec) {
    Signature sig = a.sig;
    for (std::size_t i = 0; i < spec.theta.size(); ++i) {
        const std::string name = detail::test_symbol(static_cast<int>(i));
        for (const auto& rel : a.sig.relations)
            if (rel.name == name)
                throw std::invalid_argument("signature already contains " + name);
        sig.relations.push_back({name, spec.r});
    }
    FiniteStructure test(sig, a.size);
    for (std::size_t i = 0; i < a.facts.size(); ++i) test.facts[i] = a.facts[i];
    for (std::size_t i = 0; i < spec.theta.size(); ++i)
        test.facts[a.facts.size() + i] = ifp_stages(a, spec.theta[i]).limit();
    return test;
}

// Test vector: bit j is 1 iff the test expansion satisfies phi_j.
inline std::string sigma_of(const FiniteStructure& a, const ProgramSpec& spec) {
    const FiniteStructure test = build_test_structure(a, spec);
    std::string bits;
    for (const auto& s : spec.phi) bits.push_back(evaluate(test, s, Assignment{}) ? '1' : '0');
    return bits;
}

namespace detail {

// Everything one evaluation step derives from the current structure.
struct StepView {
    FiniteStructure test;
    std::string sigma;
    const SigmaRule* rule = nullptr;
    std::set<Tuple> psi_limit;
    std::vector<Tuple> requests;  // active tuples without an xi witness, sorted
};

inline bool xi_witnessed(const FiniteStructure& a, const SigmaRule& rule, const ProgramSpec& spec,
                         const std::set<Tuple>& psi_limit, const Tuple& req) {
    AuxRelations aux;
    aux.add(rule.psi.aux_name, spec.r, &psi_limit);
    Assignment asg;
    for (int i = 0; i < spec.r; ++i) asg[numbered("z", i)] = req[i];
    const long long count = power_ll(a.size, spec.y_arity);
    for (long long rank = 0; rank < count; ++rank) {
        Tuple w = tuple_of_rank(rank, a.size, spec.y_arity);
        for (int i = 0; i < spec.y_arity; ++i) asg[numbered("y", i)] = w[i];
        if (evaluate(a, rule.xi, asg, aux)) return true;
    }
    return false;
}

inline StepView make_step_view(const FiniteStructure& a, const ProgramSpec& spec) {
    StepView v;
    v.test = build_test_structure(a, spec);
    for (const auto& s : spec.phi) v.sigma.push_back(evaluate(v.test, s, Assignment{}) ? '1' : '0');
    auto it = spec.sigma_rules.find(v.sigma);
    if (it == spec.sigma_rules.end())
        throw std::runtime_error("no sigma rule for test vector " +
                                 (v.sigma.empty() ? std::string("<empty>") : v.sigma));
    v.rule = &it->second;
    v.psi_limit = ifp_stages(a, v.rule->psi).limit();
    for (const auto& t : v.psi_limit)
        if (!xi_witnessed(a, *v.rule, spec, v.psi_limit, t)) v.requests.push_back(t);
    return v;
}

struct Attention {
    Tuple acted;     // least requesting tuple of the minimal type
    std::string pi;  // its qf type in the test expansion
    int pi_index = -1;
};

// The a-priori order on qf types is the lexicographic order of their
// canonical strings; the declared pi list only names command indices.
inline Attention choose_attention(const StepView& v, const ProgramSpec& spec) {
    Attention best;
    for (const auto& t : v.requests) {
        std::string ty = qf_type_string(v.test, t);
        if (best.acted.empty() || ty < best.pi) best = {t, ty, -1};  // requests sorted, first hit is least
    }
    auto it = std::find(spec.pi_types.begin(), spec.pi_types.end(), best.pi);
    if (it == spec.pi_types.end())
        throw std::runtime_error("minimal requesting type is not declared: " + best.pi);
    best.pi_index = static_cast<int>(it - spec.pi_types.begin());
    return best;
}

inline Tuple to_world(const Tuple& t, const std::vector<int>& elements) {
    Tuple w(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) w[i] = elements[t[i]];
    return w;
}

}  // namespace detail

// Equivalence classes of the world's r-tuples under a command's E formula.
// Class ids follow the rank order of the least members.
struct TupleClasses {
    int r = 0;
    std::vector<int> class_of;  // tuple rank -> class id
    std::vector<Tuple> reps;    // class id -> least member
};

inline TupleClasses tuple_classes(const FiniteStructure& w, const Formula& eq, int r) {
    const long long count = power_ll(w.size, r);
    auto related = [&](const Tuple& u, const Tuple& v) {
        Assignment asg;
        for (int i = 0; i < r; ++i) {
            asg[detail::numbered("u", i)] = u[i];
            asg[detail::numbered("v", i)] = v[i];
        }
        return evaluate(w, eq, asg);
    };
    std::vector<std::vector<char>> row(count, std::vector<char>(count, 0));
    for (long long i = 0; i < count; ++i) {
        Tuple u = tuple_of_rank(i, w.size, r);
        for (long long j = 0; j < count; ++j) row[i][j] = related(u, tuple_of_rank(j, w.size, r));
        if (!row[i][i]) throw std::invalid_argument("command equivalence is not reflexive");
    }
    for (long long i = 0; i < count; ++i)
        for (long long j = 0; j < count; ++j) {
            if (row[i][j] != row[j][i]) throw std::invalid_argument("command equivalence is not symmetric");
            if (row[i][j] && row[i] != row[j])
                throw std::invalid_argument("command equivalence is not transitive");
        }
    TupleClasses classes;
    classes.r = r;
    classes.class_of.assign(count, -1);
    for (long long i = 0; i < count; ++i) {
        if (classes.class_of[i] >= 0) continue;
        int id = static_cast<int>(classes.reps.size());
        classes.reps.push_back(tuple_of_rank(i, w.size, r));
        for (long long j = i; j < count; ++j)
            if (row[i][j]) classes.class_of[j] = id;
    }
    return classes;
}

// Active tuples of the current rule whose xi condition has no witness; the
// structure is taken as given (coordinates are its own element ids).
inline std::vector<Tuple> requests_attention(const FiniteStructure& a, const ProgramSpec& spec) {
    return detail::make_step_view(a, spec).requests;
}

struct ResponseRecord {
    Tuple request;                 // c-bar
    Tuple chosen;                  // least response candidate b-bar
    int class_id = -1;             // E class of the chosen response
    std::vector<Tuple> candidates; // all chi responses for this request, sorted
};

struct RunStep {
    std::string sigma;
    Tuple acted;  // attention tuple
    std::string pi;
    int pi_index = -1;
    std::vector<Tuple> requests;  // every request of the acted type, sorted
    std::vector<ResponseRecord> responses;
};

// World coordinates throughout; chain[i] is the i-th closed set, steps[i]
// consumed chain[i]. A complete run ends because nothing requests attention;
// a stabilized incomplete run repeats its last set.
struct RunTrace {
    FiniteStructure world;
    std::vector<int> initial;
    std::vector<std::vector<int>> chain;
    std::vector<RunStep> steps;
    bool stabilized = false;
    bool complete = false;
    int stabilization_step = -1;
};

// Closure-iterated evaluation: close the start set, then repeatedly act at
// the least requesting tuple of the least declared type, answer every request
// of that type with the least chi candidate, and close over the responses.
// max_steps 0 means |W|+1, enough for any strictly growing chain.
inline RunTrace eval_star(const std::set<int>& start, const ProgramSpec& spec,
                          const CommandTable& commands, const FiniteStructure& w,
                          const ClosureConfig& cfg, int max_steps = 0) {
    if (start.empty()) throw std::invalid_argument("evaluation requires a nonempty start set");
    if (*start.begin() < 0 || *start.rbegin() >= w.size)
        throw std::invalid_argument("start element out of range");
    if (max_steps <= 0) max_steps = w.size + 1;

    std::map<std::pair<std::string, int>, TupleClasses> classes;
    for (const auto& [key, rule] : commands.rules) classes.emplace(key, tuple_classes(w, rule.eq, spec.r));

    RunTrace trace;
    trace.world = w;
    trace.initial.assign(start.begin(), start.end());
    std::set<int> current = k_closure(w, start, cfg);
    trace.chain.emplace_back(current.begin(), current.end());

    for (int step = 0; step < max_steps; ++step) {
        InducedSubstructure local = induced_substructure(w, current);
        detail::StepView view = detail::make_step_view(local.structure, spec);
        if (view.requests.empty()) {
            trace.stabilized = trace.complete = true;
            trace.stabilization_step = step;
            return trace;
        }
        detail::Attention at = detail::choose_attention(view, spec);
        const CommandRule& rule = commands.rule_for(view.sigma, at.pi_index);
        const TupleClasses& cls = classes.at({view.sigma, at.pi_index});

        RunStep rec;
        rec.sigma = view.sigma;
        rec.acted = detail::to_world(at.acted, local.elements);
        rec.pi = at.pi;
        rec.pi_index = at.pi_index;
        for (const auto& t : view.requests)
            if (qf_type_string(view.test, t) == at.pi)
                rec.requests.push_back(detail::to_world(t, local.elements));

        std::set<int> next = current;
        const long long count = power_ll(w.size, spec.r);
        for (const auto& c : rec.requests) {
            ResponseRecord resp;
            resp.request = c;
            Assignment asg;
            for (int i = 0; i < spec.r; ++i) {
                asg[detail::numbered("a", i)] = rec.acted[i];
                asg[detail::numbered("c", i)] = c[i];
            }
            for (long long rank = 0; rank < count; ++rank) {
                Tuple b = tuple_of_rank(rank, w.size, spec.r);
                for (int i = 0; i < spec.r; ++i) asg[detail::numbered("b", i)] = b[i];
                if (evaluate(w, rule.chi, asg)) resp.candidates.push_back(b);
            }
            if (resp.candidates.empty())
                throw std::runtime_error("command produced no response for sigma " + view.sigma +
                                         " pi " + std::to_string(at.pi_index));
            resp.chosen = resp.candidates.front();
            resp.class_id = cls.class_of[rank_of_tuple(resp.chosen, w.size)];
            for (int e : resp.chosen) next.insert(e);
            rec.responses.push_back(std::move(resp));
        }
        next = k_closure(w, next, cfg);
        trace.steps.push_back(std::move(rec));
        trace.chain.emplace_back(next.begin(), next.end());
        if (next == current) {
            trace.stabilized = true;
            trace.stabilization_step = step;
            return trace;
        }
        current = std::move(next);
    }
    return trace;  // max_steps exhausted, stabilized stays false
}

}  // namespace kfm
