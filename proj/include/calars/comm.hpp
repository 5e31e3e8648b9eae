#pragma once

#include <algorithm>
#include <any>
#include <atomic>
#include <chrono>
#include <concepts>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <ranges>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <type_traits>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "calars/error.hpp"
#include "calars/exact_sum.hpp"

namespace calars {

/// Hardware parameters of the α-β model: seconds per flop, per message, per word.
struct CostModel {
    double gamma = 1e-9;
    double alpha = 1e-6;
    double beta = 1e-9;

    void validate() const
    {
        if (!(gamma > 0.0) || !(alpha > 0.0) || !(beta > 0.0))
            throw ConfigError("cost model parameters must be positive");
    }
};

/// Critical-path position of a rank: messages and words on the longest
/// dependency chain that ends at this rank.
struct Clock {
    std::uint64_t messages = 0;
    std::uint64_t words = 0;

    friend bool operator==(const Clock&, const Clock&) = default;
};

struct PhaseStats {
    std::uint64_t messages = 0;  // critical path
    std::uint64_t words = 0;     // critical path
    std::uint64_t sends = 0;     // point-to-point transmissions, all ranks
    std::uint64_t volume = 0;    // words moved, all ranks

    friend bool operator==(const PhaseStats&, const PhaseStats&) = default;
};

/// Communication counters merged over ranks. `messages`/`words` follow the
/// critical path (the α and β terms of the model); `total_sends` and
/// `total_words` count every transmission.
struct CommStats {
    std::uint64_t messages = 0;
    std::uint64_t words = 0;
    std::uint64_t total_sends = 0;
    std::uint64_t total_words = 0;
    std::uint64_t flops = 0;  // max over ranks
    std::map<std::string, PhaseStats> phases;
    std::map<std::pair<int, int>, std::uint64_t> edges;  // (src, dst) -> sends

    friend bool operator==(const CommStats&, const CommStats&) = default;
};

/// γF + αL + βW.
inline double modeled_time(const CommStats& stats, double flops, const CostModel& cost)
{
    return cost.gamma * flops + cost.alpha * static_cast<double>(stats.messages) +
           cost.beta * static_cast<double>(stats.words);
}

inline nlohmann::json to_json(const CommStats& s)
{
    nlohmann::json phases = nlohmann::json::object();
    for (const auto& [name, p] : s.phases)
        phases[name] = {{"messages", p.messages}, {"words", p.words}, {"sends", p.sends}, {"volume", p.volume}};
    return {{"messages", s.messages}, {"words", s.words},   {"total_sends", s.total_sends},
            {"total_words", s.total_words}, {"flops", s.flops}, {"phases", phases}};
}

inline nlohmann::json to_json(const CostModel& c)
{
    return {{"gamma", c.gamma}, {"alpha", c.alpha}, {"beta", c.beta}};
}

/// ⌈log₂ P⌉, the number of rounds of a binomial-tree collective.
inline int tree_depth(int P)
{
    int d = 0;
    while ((1 << d) < P) ++d;
    return d;
}

/// What a rank does at one level (1-based) of the pairwise tournament tree.
/// Ranks 2i and 2i+1 pair at level 1; the lower rank keeps the node.
enum class TreeRole { send, receive, bye, idle };

inline TreeRole tree_role(int rank, int level, int P)
{
    const int half = 1 << (level - 1);
    if (rank % half != 0) return TreeRole::idle;
    if (rank % (2 * half) == half) return TreeRole::send;
    return rank + half < P ? TreeRole::receive : TreeRole::bye;
}

template <class T>
std::uint64_t payload_words(const T& v)
{
    if constexpr (requires { v.words(); }) {
        return static_cast<std::uint64_t>(v.words());
    } else if constexpr (std::is_arithmetic_v<T>) {
        return 1;
    } else if constexpr (std::ranges::sized_range<T>) {
        return static_cast<std::uint64_t>(std::ranges::size(v));
    } else {
        static_assert(sizeof(T) == 0, "payload_words: unsupported payload type");
    }
}

struct SpmdOptions {
    /// When set, ranks sleep a seeded random interval before every collective.
    std::optional<std::uint64_t> jitter_seed;
};

namespace detail {

struct Aborted : std::exception {
    const char* what() const noexcept override { return "SPMD run aborted by another rank"; }
};

struct Message {
    int src = 0;
    std::uint64_t seq = 0;
    std::any payload;
    std::uint64_t words = 0;
    Clock stamp;
    Clock phase_stamp;
};

struct Mailbox {
    std::mutex mutex;
    std::condition_variable ready;
    std::deque<Message> queue;
};

struct LedgerEntry {
    std::string kind;
    std::string phase;
    std::optional<std::uint64_t> words;
    int first_rank = 0;
};

class World {
public:
    explicit World(int P) : P_(P), boxes_(static_cast<std::size_t>(P)), counts_(static_cast<std::size_t>(P), 0),
                            finished_(static_cast<std::size_t>(P), false) {}

    int size() const noexcept { return P_; }

    void post(int dst, Message msg)
    {
        auto& box = boxes_[static_cast<std::size_t>(dst)];
        {
            std::lock_guard lock(box.mutex);
            box.queue.push_back(std::move(msg));
        }
        box.ready.notify_all();
    }

    Message take(int self, int src, std::uint64_t seq)
    {
        auto& box = boxes_[static_cast<std::size_t>(self)];
        std::unique_lock lock(box.mutex);
        for (;;) {
            if (aborted_.load()) throw Aborted{};
            for (auto it = box.queue.begin(); it != box.queue.end(); ++it) {
                if (it->src == src && it->seq == seq) {
                    Message m = std::move(*it);
                    box.queue.erase(it);
                    return m;
                }
            }
            box.ready.wait(lock);
        }
    }

    /// Records that `rank` entered collective `seq`; all ranks must agree on its identity.
    void enter(int rank, std::uint64_t seq, const std::string& kind, std::string_view phase,
               std::optional<std::uint64_t> words)
    {
        std::lock_guard lock(ledger_mutex_);
        if (aborted_.load()) throw Aborted{};
        for (int r = 0; r < P_; ++r)
            if (finished_[static_cast<std::size_t>(r)] && counts_[static_cast<std::size_t>(r)] <= seq)
                throw ProtocolError("collective #" + std::to_string(seq) + " " + kind + "(" + std::string(phase) +
                                    "): rank " + std::to_string(r) + " already exited");
        if (seq < ledger_.size()) {
            const auto& e = ledger_[seq];
            if (e.kind != kind || e.phase != phase)
                throw ProtocolError("collective #" + std::to_string(seq) + " mismatch: rank " + std::to_string(rank) +
                                    " called " + kind + "(" + std::string(phase) + ") but rank " +
                                    std::to_string(e.first_rank) + " called " + e.kind + "(" + e.phase + ")");
            if (e.words && words && *e.words != *words)
                throw ProtocolError("collective #" + std::to_string(seq) + " " + kind + "(" + std::string(phase) +
                                    "): length mismatch, rank " + std::to_string(rank) + " has " +
                                    std::to_string(*words) + " words, rank " + std::to_string(e.first_rank) +
                                    " has " + std::to_string(*e.words));
        } else {
            ledger_.push_back({kind, std::string(phase), words, rank});
        }
        counts_[static_cast<std::size_t>(rank)] = seq + 1;
    }

    void finish(int rank, std::uint64_t count)
    {
        std::lock_guard lock(ledger_mutex_);
        finished_[static_cast<std::size_t>(rank)] = true;
        counts_[static_cast<std::size_t>(rank)] = count;
        if (ledger_.size() > count) {
            const auto& e = ledger_[count];
            throw ProtocolError("rank " + std::to_string(rank) + " exited before collective #" +
                                std::to_string(count) + " " + e.kind + "(" + e.phase + ")");
        }
    }

    void abort()
    {
        aborted_.store(true);
        for (auto& box : boxes_) {
            std::lock_guard lock(box.mutex);
            box.ready.notify_all();
        }
    }

private:
    int P_;
    std::vector<Mailbox> boxes_;
    std::mutex ledger_mutex_;
    std::vector<LedgerEntry> ledger_;
    std::vector<std::uint64_t> counts_;
    std::vector<bool> finished_;
    std::atomic<bool> aborted_{false};
};

}  // namespace detail

/// Per-rank counters after a run.
struct RankReport {
    Clock clock;
    std::map<std::string, Clock> phase_clocks;
    std::map<std::string, PhaseStats> phase_totals;  // sends and volume originating here
    std::map<std::pair<int, int>, std::uint64_t> edges;
    std::uint64_t flops = 0;
    double idle_seconds = 0.0;  // wall time blocked in receives; not deterministic
};

/// One rank's endpoint. All inter-rank data flows through these collectives,
/// which must be called by every rank in the same order.
class Communicator {
public:
    Communicator(detail::World& world, int rank, const SpmdOptions& opts)
        : world_(world), rank_(rank)
    {
        if (opts.jitter_seed) jitter_.emplace(*opts.jitter_seed * 7919 + static_cast<std::uint64_t>(rank));
    }

    Communicator(const Communicator&) = delete;
    Communicator& operator=(const Communicator&) = delete;

    int rank() const noexcept { return rank_; }
    int size() const noexcept { return world_.size(); }
    bool is_root() const noexcept { return rank_ == 0; }

    Clock clock() const noexcept { return report_.clock; }
    void add_flops(std::uint64_t f) noexcept { report_.flops += f; }
    std::uint64_t flops() const noexcept { return report_.flops; }

    /// Binomial-tree reduction to rank 0. In round r, rank i with lowest set
    /// bit r sends its partial to i − 2^r, which combines it after its own
    /// (lower rank first). Returns the result on rank 0, nullopt elsewhere.
    template <class T, class Combine>
    std::optional<T> reduce(T local, std::string_view phase, Combine&& combine)
    {
        const std::uint64_t words = payload_words(local);
        const auto seq = enter("reduce", phase, words);
        const int P = size();
        for (int mask = 1; mask < P; mask <<= 1) {
            if ((rank_ & (2 * mask - 1)) == mask) {
                send(rank_ - mask, seq, phase, std::any(std::move(local)), words);
                return std::nullopt;
            }
            if ((rank_ & (2 * mask - 1)) == 0 && rank_ + mask < P) {
                auto msg = recv(rank_ + mask, seq, phase);
                combine(local, std::any_cast<T&&>(std::move(msg.payload)));
            }
        }
        return local;
    }

    /// Elementwise sum to rank 0; rounding follows the fixed tree order.
    std::vector<double> reduce_sum(std::span<const double> v, std::string_view phase)
    {
        auto out = reduce(std::vector<double>(v.begin(), v.end()), phase,
                          [](std::vector<double>& acc, std::vector<double>&& child) {
                              for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += child[i];
                          });
        return out ? std::move(*out) : std::vector<double>{};
    }

    /// Elementwise exact sum to rank 0, rounded once at the root, so the
    /// result does not depend on P. Charged as one word per entry.
    std::vector<double> reduce_sum_exact(std::vector<ExactAccumulator> v, std::string_view phase)
    {
        auto out = reduce(ExactPayload{std::move(v)}, phase, [](ExactPayload& acc, ExactPayload&& child) {
            for (std::size_t i = 0; i < acc.sums.size(); ++i) acc.sums[i].merge(child.sums[i]);
        });
        if (!out) return {};
        std::vector<double> result(out->sums.size());
        for (std::size_t i = 0; i < result.size(); ++i) result[i] = out->sums[i].value();
        return result;
    }

    /// Binomial-tree broadcast from rank 0. Only rank 0 may supply a value.
    template <class T>
    T broadcast(std::optional<T> value, std::string_view phase)
    {
        const auto seq = enter("broadcast", phase, std::nullopt);
        if (rank_ == 0 && !value) throw ProtocolError("broadcast(" + std::string(phase) + "): root supplied no data");
        if (rank_ != 0 && value)
            throw ProtocolError("broadcast(" + std::string(phase) + "): non-root rank " + std::to_string(rank_) +
                                " supplied data");
        const int P = size();
        int top = 1;
        while (top < P) top <<= 1;
        for (int mask = top >> 1; mask >= 1; mask >>= 1) {
            if ((rank_ & (2 * mask - 1)) == 0 && rank_ + mask < P) {
                send(rank_ + mask, seq, phase, std::any(*value), payload_words(*value));
            } else if ((rank_ & (2 * mask - 1)) == mask) {
                auto msg = recv(rank_ - mask, seq, phase);
                value.emplace(std::any_cast<T&&>(std::move(msg.payload)));
            }
        }
        return std::move(*value);
    }

    /// One level of the tournament tree: senders pass `payload` to their
    /// parent, receivers get their child's payload back, bye and idle ranks
    /// get nullopt. Every rank calls this for every level.
    template <class T>
    std::optional<T> tree_up(int level, const T& payload, std::string_view phase)
    {
        const auto seq = enter("tree_up:" + std::to_string(level), phase, std::nullopt);
        const int half = 1 << (level - 1);
        switch (tree_role(rank_, level, size())) {
        case TreeRole::send:
            send(rank_ - half, seq, phase, std::any(payload), payload_words(payload));
            return std::nullopt;
        case TreeRole::receive: {
            auto msg = recv(rank_ + half, seq, phase);
            return std::any_cast<T&&>(std::move(msg.payload));
        }
        default:
            return std::nullopt;
        }
    }

    /// Called by spmd_run once the program returns.
    void finish() { world_.finish(rank_, seq_); }

    const RankReport& report() const noexcept { return report_; }

private:
    struct ExactPayload {
        std::vector<ExactAccumulator> sums;
        std::size_t words() const noexcept { return sums.size(); }
    };

    std::uint64_t enter(const std::string& kind, std::string_view phase, std::optional<std::uint64_t> words)
    {
        if (jitter_) {
            std::uniform_int_distribution<int> us(0, 200);
            std::this_thread::sleep_for(std::chrono::microseconds(us(*jitter_)));
        }
        const auto seq = seq_++;
        world_.enter(rank_, seq, kind, phase, words);
        report_.phase_clocks.try_emplace(std::string(phase));
        return seq;
    }

    void send(int dst, std::uint64_t seq, std::string_view phase, std::any payload, std::uint64_t words)
    {
        auto& pc = report_.phase_clocks[std::string(phase)];
        report_.clock.messages += 1;
        report_.clock.words += words;
        pc.messages += 1;
        pc.words += words;
        auto& pt = report_.phase_totals[std::string(phase)];
        pt.sends += 1;
        pt.volume += words;
        report_.edges[{rank_, dst}] += 1;
        world_.post(dst, {rank_, seq, std::move(payload), words, report_.clock, pc});
    }

    detail::Message recv(int src, std::uint64_t seq, std::string_view phase)
    {
        const auto t0 = std::chrono::steady_clock::now();
        auto msg = world_.take(rank_, src, seq);
        report_.idle_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        // A receive occupies the receiver for one message / `words` words after
        // both it and the sender are ready.
        auto advance = [&](Clock& c, const Clock& stamp) {
            c.messages = std::max(c.messages + 1, stamp.messages);
            c.words = std::max(c.words + msg.words, stamp.words);
        };
        advance(report_.clock, msg.stamp);
        advance(report_.phase_clocks[std::string(phase)], msg.phase_stamp);
        return msg;
    }

    detail::World& world_;
    int rank_;
    std::uint64_t seq_ = 0;
    RankReport report_;
    std::optional<std::mt19937_64> jitter_;
};

inline CommStats merge_reports(std::span<const RankReport> reports)
{
    CommStats s;
    for (const auto& r : reports) {
        s.messages = std::max(s.messages, r.clock.messages);
        s.words = std::max(s.words, r.clock.words);
        s.flops = std::max(s.flops, r.flops);
        for (const auto& [name, c] : r.phase_clocks) {
            auto& p = s.phases[name];
            p.messages = std::max(p.messages, c.messages);
            p.words = std::max(p.words, c.words);
        }
        for (const auto& [name, t] : r.phase_totals) {
            auto& p = s.phases[name];
            p.sends += t.sends;
            p.volume += t.volume;
            s.total_sends += t.sends;
            s.total_words += t.volume;
        }
        for (const auto& [edge, count] : r.edges) s.edges[edge] += count;
    }
    return s;
}

template <class R>
struct SpmdResult {
    std::vector<R> results;  // indexed by rank
    CommStats stats;
    std::vector<RankReport> ranks;
};

struct Unit {};

/// Runs `program(comm)` on P logical ranks, one thread each, and merges the
/// counters. The first real error (lowest rank) is rethrown after all ranks stop.
template <class Program>
auto spmd_run(int P, Program&& program, const SpmdOptions& opts = {})
{
    using Raw = std::invoke_result_t<Program&, Communicator&>;
    using R = std::conditional_t<std::is_void_v<Raw>, Unit, Raw>;
    if (P < 1) throw ConfigError("spmd_run: P must be >= 1");

    detail::World world(P);
    std::vector<std::optional<R>> results(static_cast<std::size_t>(P));
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(P));
    std::vector<RankReport> reports(static_cast<std::size_t>(P));

    auto body = [&](int r) {
        Communicator comm(world, r, opts);
        try {
            if constexpr (std::is_void_v<Raw>) {
                program(comm);
                results[static_cast<std::size_t>(r)].emplace();
            } else {
                results[static_cast<std::size_t>(r)].emplace(program(comm));
            }
            comm.finish();
        } catch (...) {
            errors[static_cast<std::size_t>(r)] = std::current_exception();
            world.abort();
        }
        reports[static_cast<std::size_t>(r)] = comm.report();
    };

    if (P == 1) {
        body(0);
    } else {
        std::vector<std::thread> threads;
        threads.reserve(static_cast<std::size_t>(P));
        for (int r = 0; r < P; ++r) threads.emplace_back(body, r);
        for (auto& t : threads) t.join();
    }

    std::exception_ptr aborted;
    for (const auto& e : errors) {
        if (!e) continue;
        try {
            std::rethrow_exception(e);
        } catch (const detail::Aborted&) {
            aborted = e;
        } catch (...) {
            throw;
        }
    }
    if (aborted) throw ProtocolError("SPMD run aborted without a reported cause");

    SpmdResult<R> out;
    out.results.reserve(static_cast<std::size_t>(P));
    for (auto& r : results) out.results.push_back(std::move(*r));
    out.stats = merge_reports(reports);
    out.ranks = std::move(reports);
    return out;
}

}  // namespace calars
