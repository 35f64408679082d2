#include "mzi/itf.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <climits>
#include <cmath>
#include <complex>
#include <cstdio>
#include <deque>
#include <set>

namespace mzi {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// Lexer: line-oriented, '#' comments, identifiers / floats / punctuation.

struct Token {
    enum Kind { ident, number, punct, eol } kind = eol;
    std::string text;
    double value = 0.0;
    int line = 0;
    int column = 0;
};

class LineLexer {
public:
    LineLexer(std::string_view line, int line_no) : line_(line), line_no_(line_no) {}

    Token next() {
        while (pos_ < line_.size() && (line_[pos_] == ' ' || line_[pos_] == '\t' || line_[pos_] == '\r'))
            ++pos_;
        if (pos_ >= line_.size() || line_[pos_] == '#')
            return Token{Token::eol, "", 0.0, line_no_, static_cast<int>(pos_) + 1};

        const int col = static_cast<int>(pos_) + 1;
        const char c = line_[pos_];
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            size_t start = pos_;
            while (pos_ < line_.size() &&
                   (std::isalnum(static_cast<unsigned char>(line_[pos_])) || line_[pos_] == '_'))
                ++pos_;
            return Token{Token::ident, std::string(line_.substr(start, pos_ - start)), 0.0, line_no_, col};
        }
        if (line_.compare(pos_, 2, "->") == 0) {
            pos_ += 2;
            return Token{Token::punct, "->", 0.0, line_no_, col};
        }
        const bool number_start =
            std::isdigit(static_cast<unsigned char>(c)) ||
            ((c == '-' || c == '+' || c == '.') && pos_ + 1 < line_.size() &&
             (std::isdigit(static_cast<unsigned char>(line_[pos_ + 1])) || line_[pos_ + 1] == '.'));
        if (number_start) {
            size_t start = pos_;
            while (pos_ < line_.size() && !std::isspace(static_cast<unsigned char>(line_[pos_])) &&
                   line_[pos_] != '#')
                ++pos_;
            std::string text(line_.substr(start, pos_ - start));
            double value = 0.0;
            auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
            if (ec != std::errc{} || ptr != text.data() + text.size())
                throw ParseError(ErrorCode::syntax_error, line_no_, col, "malformed number '" + text + "'");
            return Token{Token::number, text, value, line_no_, col};
        }
        ++pos_;
        return Token{Token::punct, std::string(1, c), 0.0, line_no_, col};
    }

private:
    std::string_view line_;
    int line_no_;
    size_t pos_ = 0;
};

class StmtReader {
public:
    StmtReader(std::string_view line, int line_no) : lex_(line, line_no), line_no_(line_no) {
        advance();
    }

    const Token& peek() const { return tok_; }
    bool at_end() const { return tok_.kind == Token::eol; }

    Token take() {
        Token t = tok_;
        advance();
        return t;
    }

    std::string expect_ident(const char* what) {
        if (tok_.kind != Token::ident)
            fail(std::string("expected ") + what);
        return take().text;
    }

    double expect_number(const char* what) {
        if (tok_.kind != Token::number)
            fail(std::string("expected ") + what);
        return take().value;
    }

    void expect_punct(const std::string& p) {
        if (tok_.kind != Token::punct || tok_.text != p)
            fail("expected '" + p + "'");
        advance();
    }

    bool accept_punct(const std::string& p) {
        if (tok_.kind == Token::punct && tok_.text == p) {
            advance();
            return true;
        }
        return false;
    }

    bool accept_keyword(const std::string& kw) {
        if (tok_.kind == Token::ident && tok_.text == kw) {
            advance();
            return true;
        }
        return false;
    }

    void expect_keyword(const std::string& kw) {
        if (!accept_keyword(kw))
            fail("expected keyword '" + kw + "'");
    }

    void expect_end() {
        if (!at_end())
            fail("unexpected trailing input '" + tok_.text + "'");
    }

    [[noreturn]] void fail(const std::string& msg) const {
        throw ParseError(ErrorCode::syntax_error, line_no_, tok_.column,
                         msg + (tok_.kind == Token::eol ? " at end of line" : ", got '" + tok_.text + "'"));
    }

private:
    void advance() { tok_ = lex_.next(); }

    LineLexer lex_;
    int line_no_;
    Token tok_;
};

bool parse_port_name(const std::string& text, Port& out) {
    if (text == "in1") out = Port::in1;
    else if (text == "in2") out = Port::in2;
    else if (text == "out1") out = Port::out1;
    else if (text == "out2") out = Port::out2;
    else return false;
    return true;
}

bool node_has_port(NodeKind kind, Port port) {
    switch (kind) {
        case NodeKind::source: return port == Port::out1;
        case NodeKind::beamsplitter: return true;
        case NodeKind::mirror: return port == Port::in1 || port == Port::out1;
        case NodeKind::detector: return port == Port::in1;
    }
    return false;
}

bool is_input(Port p) { return p == Port::in1 || p == Port::in2; }

std::string port_key(const PortRef& ref) { return ref.node + "." + to_string(ref.port); }

}  // namespace

const char* to_string(NodeKind kind) {
    switch (kind) {
        case NodeKind::source: return "source";
        case NodeKind::beamsplitter: return "bs";
        case NodeKind::mirror: return "mirror";
        case NodeKind::detector: return "detector";
    }
    return "?";
}

const char* to_string(Port port) {
    switch (port) {
        case Port::in1: return "in1";
        case Port::in2: return "in2";
        case Port::out1: return "out1";
        case Port::out2: return "out2";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Builder: wiring validation, slot assignment, occupancy.

class ItfBuilder {
public:
    InterferometerSpec build(std::vector<NodeSpec> nodes, std::vector<ChannelSpec> channels) {
        InterferometerSpec spec;
        spec.nodes_ = std::move(nodes);
        spec.channels_ = std::move(channels);

        index_nodes(spec);
        wire_ports(spec);
        assign_slots(spec);
        map_endpoints(spec);
        return spec;
    }

private:
    void index_nodes(InterferometerSpec& spec) {
        int sources = 0;
        for (size_t i = 0; i < spec.nodes_.size(); ++i) {
            const NodeSpec& n = spec.nodes_[i];
            if (!spec.node_index_.emplace(n.name, static_cast<int>(i)).second)
                throw Error(ErrorCode::duplicate_name, "node '" + n.name + "' declared twice");
            if (n.kind == NodeKind::source) ++sources;
            if (n.kind == NodeKind::detector) spec.detectors_.push_back(n.name);
        }
        if (sources != 1)
            throw Error(ErrorCode::no_source,
                        sources == 0 ? "no source declared" : "expected exactly one source, found " +
                                                                  std::to_string(sources));
        for (size_t i = 0; i < spec.channels_.size(); ++i) {
            if (!spec.channel_index_.emplace(spec.channels_[i].name, static_cast<int>(i)).second)
                throw Error(ErrorCode::duplicate_name,
                            "channel '" + spec.channels_[i].name + "' declared twice");
        }
    }

    void wire_ports(InterferometerSpec& spec) {
        std::set<std::string> used;
        for (const ChannelSpec& ch : spec.channels_) {
            for (const PortRef* ref : {&ch.from, &ch.to}) {
                auto it = spec.node_index_.find(ref->node);
                if (it == spec.node_index_.end())
                    throw Error(ErrorCode::syntax_error,
                                "channel '" + ch.name + "' references unknown node '" + ref->node + "'");
                const NodeSpec& n = spec.nodes_[it->second];
                if (!node_has_port(n.kind, ref->port))
                    throw Error(ErrorCode::syntax_error, std::string(to_string(n.kind)) + " '" + n.name +
                                                             "' has no port " + to_string(ref->port));
                const bool want_input = (ref == &ch.to);
                if (is_input(ref->port) != want_input)
                    throw Error(ErrorCode::syntax_error,
                                "channel '" + ch.name + "' must run out-port -> in-port, got " +
                                    port_key(*ref));
                if (!used.insert(port_key(*ref)).second)
                    throw Error(ErrorCode::dangling_port,
                                "port " + port_key(*ref) + " connected more than once");
            }
        }
        // every out port must drive a channel; detector inputs must be fed.
        // Beamsplitter / mirror inputs may be left open (vacuum).
        for (const NodeSpec& n : spec.nodes_) {
            for (Port p : {Port::out1, Port::out2, Port::in1}) {
                if (!node_has_port(n.kind, p)) continue;
                if (is_input(p) && n.kind != NodeKind::detector) continue;
                if (!used.count(port_key({n.name, p})))
                    throw Error(ErrorCode::dangling_port, "port " + n.name + "." + to_string(p) +
                                                              " is not connected");
            }
        }
    }

    void assign_slots(InterferometerSpec& spec) {
        const size_t n_nodes = spec.nodes_.size();
        std::vector<std::vector<int>> succ(n_nodes), pred(n_nodes);
        for (const ChannelSpec& ch : spec.channels_) {
            int u = spec.node_index_.at(ch.from.node);
            int v = spec.node_index_.at(ch.to.node);
            succ[u].push_back(v);
            pred[v].push_back(u);
        }

        // Kahn topological order; leftover nodes sit on a cycle.
        std::vector<int> indeg(n_nodes, 0), topo;
        for (size_t v = 0; v < n_nodes; ++v) indeg[v] = static_cast<int>(pred[v].size());
        std::deque<int> ready;
        for (size_t v = 0; v < n_nodes; ++v)
            if (indeg[v] == 0) ready.push_back(static_cast<int>(v));
        while (!ready.empty()) {
            int u = ready.front();
            ready.pop_front();
            topo.push_back(u);
            for (int v : succ[u])
                if (--indeg[v] == 0) ready.push_back(v);
        }
        if (topo.size() != n_nodes) {
            for (size_t v = 0; v < n_nodes; ++v)
                if (indeg[v] > 0)
                    throw Error(ErrorCode::not_a_dag,
                                "node '" + spec.nodes_[v].name + "' lies on a cycle");
        }

        // longest-path rank; non-source nodes start at stage 1.
        std::vector<int> rank(n_nodes, 0);
        for (int u : topo) {
            if (spec.nodes_[u].kind != NodeKind::source && rank[u] == 0) rank[u] = 1;
            for (int v : succ[u]) rank[v] = std::max(rank[v], rank[u] + 1);
        }

        // producer/consumer of each node's channels, by port
        auto feeding_channel = [&](int v) -> const ChannelSpec* {
            for (const ChannelSpec& ch : spec.channels_)
                if (spec.node_index_.at(ch.to.node) == v) return &ch;
            return nullptr;
        };

        // Mirror folding: a mirror fed from a beamsplitter's out2 joins that
        // beamsplitter's stage; any other mirror joins its consumer's stage
        // (or keeps its own rank when it feeds a detector). Reverse
        // topological order resolves mirror-to-mirror chains.
        std::vector<int> stage(n_nodes);
        for (size_t v = 0; v < n_nodes; ++v) stage[v] = rank[v];
        for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
            int m = *it;
            if (spec.nodes_[m].kind != NodeKind::mirror) continue;
            const ChannelSpec* in = feeding_channel(m);
            if (in != nullptr) {
                int u = spec.node_index_.at(in->from.node);
                if (spec.nodes_[u].kind == NodeKind::beamsplitter && in->from.port == Port::out2) {
                    stage[m] = stage[u];
                    continue;
                }
            }
            if (!succ[m].empty()) {
                int v = succ[m].front();
                if (spec.nodes_[v].kind != NodeKind::detector) stage[m] = stage[v];
            }
        }

        int max_stage = 0;
        for (size_t v = 0; v < n_nodes; ++v)
            if (spec.nodes_[v].kind != NodeKind::detector) max_stage = std::max(max_stage, stage[v]);
        spec.slot_count_ = max_stage + 1;

        for (size_t v = 0; v < n_nodes; ++v)
            spec.node_slot_[spec.nodes_[v].name] =
                spec.nodes_[v].kind == NodeKind::detector ? spec.slot_count_ : stage[v];

        spec.stage_nodes_.assign(spec.slot_count_, {});
        for (int u : topo) {
            if (spec.nodes_[u].kind == NodeKind::detector || spec.nodes_[u].kind == NodeKind::source)
                continue;
            spec.stage_nodes_[stage[u]].push_back(spec.nodes_[u].name);
        }

        spec.produced_at_.resize(spec.channels_.size());
        spec.consumed_at_.resize(spec.channels_.size());
        for (size_t i = 0; i < spec.channels_.size(); ++i) {
            const ChannelSpec& ch = spec.channels_[i];
            int u = spec.node_index_.at(ch.from.node);
            int v = spec.node_index_.at(ch.to.node);
            spec.produced_at_[i] = spec.nodes_[u].kind == NodeKind::source ? 0 : stage[u];
            spec.consumed_at_[i] = spec.nodes_[v].kind == NodeKind::detector ? INT_MAX : stage[v];
        }
    }

    void map_endpoints(InterferometerSpec& spec) {
        for (const ChannelSpec& ch : spec.channels_) {
            const NodeSpec& from = spec.nodes_[spec.node_index_.at(ch.from.node)];
            const NodeSpec& to = spec.nodes_[spec.node_index_.at(ch.to.node)];
            if (from.kind == NodeKind::source) spec.source_channel_ = ch.name;
            if (to.kind == NodeKind::detector) spec.detector_channel_[to.name] = ch.name;
        }
        if (spec.source_channel_.empty())
            throw Error(ErrorCode::dangling_port, "source output is not connected");
    }
};

// ---------------------------------------------------------------------------
// InterferometerSpec queries

int InterferometerSpec::node_index(const std::string& name) const {
    auto it = node_index_.find(name);
    if (it == node_index_.end())
        throw Error(ErrorCode::syntax_error, "unknown node '" + name + "'");
    return it->second;
}

int InterferometerSpec::channel_index(const std::string& name) const {
    auto it = channel_index_.find(name);
    if (it == channel_index_.end())
        throw Error(ErrorCode::unknown_channel, "unknown channel '" + name + "'");
    return it->second;
}

int InterferometerSpec::slot_of(const std::string& node) const {
    auto it = node_slot_.find(node);
    if (it == node_slot_.end())
        throw Error(ErrorCode::syntax_error, "unknown node '" + node + "'");
    return it->second;
}

const std::string& InterferometerSpec::detector_channel(const std::string& detector) const {
    auto it = detector_channel_.find(detector);
    if (it == detector_channel_.end())
        throw Error(ErrorCode::unknown_channel, "unknown detector '" + detector + "'");
    return it->second;
}

bool InterferometerSpec::is_occupied(const std::string& channel, int slot) const {
    int i = channel_index(channel);
    return produced_at_[i] <= slot && slot < consumed_at_[i];
}

std::vector<std::string> InterferometerSpec::occupied_channels(int slot) const {
    std::vector<std::string> out;
    for (size_t i = 0; i < channels_.size(); ++i)
        if (produced_at_[i] <= slot && slot < consumed_at_[static_cast<int>(i)])
            out.push_back(channels_[i].name);
    return out;
}

int InterferometerSpec::default_probe_slot(const std::vector<std::string>& targets) const {
    auto all_occupied = [&](int t) {
        for (const std::string& ch : targets)
            if (!is_occupied(ch, t)) return false;
        return true;
    };
    for (int t = 1; t < slot_count_; ++t)
        if (stage_nodes_[t].empty() && all_occupied(t)) return t;
    for (int t = 0; t < slot_count_; ++t)
        if (all_occupied(t)) return t;
    std::string list;
    for (const std::string& ch : targets) list += (list.empty() ? "" : "+") + ch;
    throw Error(ErrorCode::target_not_occupied,
                "channels " + list + " are never simultaneously occupied");
}

const std::vector<std::string>& InterferometerSpec::stage_nodes(int slot) const {
    static const std::vector<std::string> empty;
    if (slot < 0 || slot >= slot_count_) return empty;
    return stage_nodes_[slot];
}

// ---------------------------------------------------------------------------
// Parser entry points

namespace {

std::vector<std::string> parse_chanexpr(StmtReader& r) {
    std::vector<std::string> channels;
    channels.push_back(r.expect_ident("channel name"));
    while (r.accept_punct("+")) channels.push_back(r.expect_ident("channel name after '+'"));
    return channels;
}

void validate_probe(ProbeSpec& probe, const InterferometerSpec& spec) {
    for (const std::string& t : probe.targets) spec.channel_index(t);  // throws UnknownChannel
    if (probe.slot < 0) {
        probe.slot = spec.default_probe_slot(probe.targets);
    } else {
        for (const std::string& t : probe.targets)
            if (!spec.is_occupied(t, probe.slot))
                throw Error(ErrorCode::target_not_occupied, "channel '" + t +
                                                                "' is not occupied at slot " +
                                                                std::to_string(probe.slot));
    }
}

}  // namespace

ParsedFile parse_file(std::string_view text) {
    std::vector<NodeSpec> nodes;
    std::vector<ChannelSpec> channels;
    std::vector<ProbeSpec> probes;

    int line_no = 0;
    size_t pos = 0;
    while (pos <= text.size()) {
        size_t eol = text.find('\n', pos);
        std::string_view line = text.substr(pos, (eol == std::string_view::npos ? text.size() : eol) - pos);
        pos = (eol == std::string_view::npos) ? text.size() + 1 : eol + 1;
        ++line_no;

        StmtReader r(line, line_no);
        if (r.at_end()) continue;

        if (r.accept_keyword("source")) {
            nodes.push_back({r.expect_ident("source name"), NodeKind::source, 0.0, 0.0});
            r.expect_end();
        } else if (r.accept_keyword("bs")) {
            NodeSpec n{r.expect_ident("beamsplitter name"), NodeKind::beamsplitter, 0.0, 0.0};
            r.expect_keyword("theta");
            n.theta = r.expect_number("theta value");
            if (r.accept_keyword("phi")) n.phi = r.expect_number("phi value");
            if (!(n.theta >= 0.0 && n.theta <= kPi / 2 + 1e-15))
                r.fail("theta must lie in [0, pi/2]");
            r.expect_end();
            nodes.push_back(std::move(n));
        } else if (r.accept_keyword("mirror")) {
            nodes.push_back({r.expect_ident("mirror name"), NodeKind::mirror, 0.0, 0.0});
            r.expect_end();
        } else if (r.accept_keyword("detector")) {
            nodes.push_back({r.expect_ident("detector name"), NodeKind::detector, 0.0, 0.0});
            r.expect_end();
        } else if (r.accept_keyword("chan")) {
            ChannelSpec ch;
            ch.name = r.expect_ident("channel name");
            r.expect_punct(":");
            auto read_port = [&](PortRef& ref) {
                ref.node = r.expect_ident("node name");
                r.expect_punct(".");
                std::string p = r.expect_ident("port name");
                if (!parse_port_name(p, ref.port)) r.fail("unknown port '" + p + "'");
            };
            read_port(ch.from);
            r.expect_punct("->");
            read_port(ch.to);
            r.expect_end();
            channels.push_back(std::move(ch));
        } else if (r.accept_keyword("probe")) {
            ProbeSpec p;
            p.name = r.expect_ident("probe name");
            r.expect_keyword("on");
            p.targets = parse_chanexpr(r);
            r.expect_keyword("eps");
            p.epsilon = r.expect_number("epsilon value");
            if (!(p.epsilon >= 0.0 && p.epsilon <= kPi / 2 + 1e-15))
                r.fail("eps must lie in [0, pi/2]");
            if (r.accept_keyword("slot")) p.slot = static_cast<int>(r.expect_number("slot index"));
            r.expect_end();
            probes.push_back(std::move(p));
        } else {
            r.fail("unknown keyword");
        }
    }

    ParsedFile out{ItfBuilder().build(std::move(nodes), std::move(channels)), std::move(probes)};

    std::set<std::string> probe_names;
    for (ProbeSpec& p : out.probes) {
        if (!probe_names.insert(p.name).second)
            throw Error(ErrorCode::duplicate_name, "probe '" + p.name + "' declared twice");
        validate_probe(p, out.itf);
    }
    return out;
}

InterferometerSpec parse_itf(std::string_view text) { return parse_file(text).itf; }

std::string print_itf(const InterferometerSpec& spec, const std::vector<ProbeSpec>& probes) {
    std::string out;
    for (const NodeSpec& n : spec.nodes()) {
        out += to_string(n.kind);
        out += ' ';
        out += n.name;
        if (n.kind == NodeKind::beamsplitter) {
            out += " theta " + fmt_double(n.theta);
            if (n.phi != 0.0) out += " phi " + fmt_double(n.phi);
        }
        out += '\n';
    }
    for (const ChannelSpec& ch : spec.channels()) {
        out += "chan " + ch.name + ": " + ch.from.node + "." + to_string(ch.from.port) + " -> " +
               ch.to.node + "." + to_string(ch.to.port) + "\n";
    }
    for (const ProbeSpec& p : probes) {
        out += "probe " + p.name + " on ";
        for (size_t i = 0; i < p.targets.size(); ++i) out += (i ? "+" : "") + p.targets[i];
        out += " eps " + fmt_double(p.epsilon) + " slot " + std::to_string(p.slot) + "\n";
    }
    return out;
}

const char* const kNestedMziText = R"(# Nested Mach-Zehnder interferometer: an inner loop (arms B, C) between BS2
# and BS3, enclosed by an outer loop (arm A against the inner output E)
# between BS1 and BS4. All splitters 50/50; the inner loop is tuned so that
# everything entering on D leaves on H.
source SRC
bs BS1 theta 0.7853981633974483
bs BS2 theta 0.7853981633974483
bs BS3 theta 0.7853981633974483
bs BS4 theta 0.7853981633974483
mirror M1
mirror M2
mirror M3
detector D1
detector D2
detector D3
chan S: SRC.out1 -> BS1.in1
chan D: BS1.out1 -> BS2.in1
chan A0: BS1.out2 -> M1.in1
chan A: M1.out1 -> BS4.in1
chan B0: BS2.out2 -> M2.in1
chan B: M2.out1 -> BS3.in1
chan C: BS2.out1 -> M3.in1
chan C2: M3.out1 -> BS3.in2
chan E: BS3.out2 -> BS4.in2
chan H: BS3.out1 -> D3.in1
chan G: BS4.out1 -> D2.in1
chan F: BS4.out2 -> D1.in1
)";

InterferometerSpec default_nested_mzi() { return parse_itf(kNestedMziText); }

InterferometerSpec with_parameter(const InterferometerSpec& spec, const std::string& node,
                                  const std::string& param, double value) {
    std::vector<NodeSpec> nodes = spec.nodes();
    NodeSpec& n = nodes[spec.node_index(node)];
    if (n.kind != NodeKind::beamsplitter)
        throw Error(ErrorCode::syntax_error, "node '" + node + "' has no adjustable parameters");
    if (param == "theta") {
        if (!(value >= 0.0 && value <= kPi / 2 + 1e-15))
            throw Error(ErrorCode::syntax_error, "theta must lie in [0, pi/2]");
        n.theta = value;
    } else if (param == "phi") {
        n.phi = value;
    } else {
        throw Error(ErrorCode::syntax_error, "unknown parameter '" + param + "'");
    }
    return ItfBuilder().build(std::move(nodes), spec.channels());
}

// ---------------------------------------------------------------------------
// Stage compilation

namespace {

using Complex = std::complex<double>;

// Full-channel-space unitary for a single node. The node's block maps its
// input channels onto its output channels; an unconnected input port's column
// is hosted on the matching output channel (vacuum input), and each consumed
// input channel receives the matching output channel's column back, keeping
// the matrix an exact unitary (block times a transposition).
Eigen::MatrixXcd node_unitary(const InterferometerSpec& spec, const NodeSpec& node) {
    const int dim = spec.channel_count();
    Eigen::MatrixXcd u = Eigen::MatrixXcd::Identity(dim, dim);

    std::string in1, in2, out1, out2;
    for (const ChannelSpec& ch : spec.channels()) {
        if (ch.to.node == node.name) (ch.to.port == Port::in1 ? in1 : in2) = ch.name;
        if (ch.from.node == node.name) (ch.from.port == Port::out1 ? out1 : out2) = ch.name;
    }

    auto apply_block = [&](const std::string& cin1, const std::string& cin2,
                           const Eigen::Matrix2cd& block) {
        const int c1 = spec.channel_index(cin1.empty() ? out1 : cin1);
        const int c2 = spec.channel_index(cin2.empty() ? out2 : cin2);
        const int r1 = spec.channel_index(out1);
        const int r2 = spec.channel_index(out2);
        u.col(c1).setZero();
        u.col(c2).setZero();
        u(r1, c1) = block(0, 0);
        u(r2, c1) = block(1, 0);
        u(r1, c2) = block(0, 1);
        u(r2, c2) = block(1, 1);
        if (!cin1.empty() && r1 != c1 && r1 != c2) {
            u.col(r1).setZero();
            u(c1, r1) = 1.0;
        }
        if (!cin2.empty() && r2 != c1 && r2 != c2) {
            u.col(r2).setZero();
            u(c2, r2) = 1.0;
        }
    };

    switch (node.kind) {
        case NodeKind::source:
        case NodeKind::detector:
            break;
        case NodeKind::mirror: {
            if (!in1.empty() && in1 != out1) {
                const int c = spec.channel_index(in1);
                const int r = spec.channel_index(out1);
                u(r, c) = 1.0;
                u(c, c) = 0.0;
                u(r, r) = 0.0;
                u(c, r) = 1.0;
            }
            break;
        }
        case NodeKind::beamsplitter: {
            const Complex i(0.0, 1.0);
            const double ct = std::cos(node.theta);
            const double st = std::sin(node.theta);
            const Complex ph = std::exp(i * node.phi);
            Eigen::Matrix2cd block;
            block << Complex(ct), i * st, ph * i * st, ph * ct;
            apply_block(in1, in2, block);
            break;
        }
    }
    return u;
}

}  // namespace

std::vector<StageUnitary> compile_stages(const InterferometerSpec& spec) {
    const int dim = spec.channel_count();
    std::vector<StageUnitary> stages;
    stages.reserve(spec.slot_count() - 1);
    for (int slot = 1; slot < spec.slot_count(); ++slot) {
        StageUnitary stage{slot, Eigen::MatrixXcd::Identity(dim, dim)};
        for (const std::string& name : spec.stage_nodes(slot))
            stage.matrix = node_unitary(spec, spec.node(name)) * stage.matrix;
        stages.push_back(std::move(stage));
    }
    return stages;
}

UnitarityReport validate_unitarity(const std::vector<StageUnitary>& stages, double tol) {
    UnitarityReport report;
    for (const StageUnitary& s : stages) {
        const Eigen::MatrixXcd gram = s.matrix.adjoint() * s.matrix;
        const double dev =
            (gram - Eigen::MatrixXcd::Identity(s.matrix.rows(), s.matrix.cols())).cwiseAbs().maxCoeff();
        report.stages.push_back({s.slot, dev, dev <= tol});
        if (dev > report.max_deviation) {
            report.max_deviation = dev;
            report.worst_slot = s.slot;
        }
        if (dev > tol) report.pass = false;
    }
    return report;
}

}  // namespace mzi
