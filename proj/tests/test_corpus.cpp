#include <algorithm>
#include <random>
#include <sstream>

#include <doctest.h>

#include "triage/corpus.hpp"

using namespace triage;
using namespace triage::corpus;

namespace {

RawMessage msg(std::string id, Timestamp t, std::string from, std::vector<std::string> to,
               std::optional<std::string> reply_to = std::nullopt, std::string body = "text") {
    RawMessage m;
    m.message_id = std::move(id);
    m.timestamp = t;
    m.sender = std::move(from);
    m.recipients = std::move(to);
    m.subject = "s";
    m.body = std::move(body);
    m.reply_to = std::move(reply_to);
    return m;
}

const SplitSpec kSplit{100, 200, 300};

const Email* find_email(const MailboxIndex& idx, const std::string& id) {
    auto i = idx.find(id);
    return i ? &idx.email(*i) : nullptr;
}

}  // namespace

TEST_CASE("five-message thread labels only the replying recipient") {
    std::vector<RawMessage> ms{
        msg("root", 10, "x", {"a", "b"}),
        msg("r1", 20, "a", {"x"}, "root"),
        // b has to reply to something to stay indexed
        msg("other", 30, "y", {"b", "c"}),
        msg("r2", 40, "b", {"y"}, "other"),
        msg("r3", 50, "c", {"y"}, "other"),
    };
    auto res = ingest(ms, kSplit);
    const auto* ea = find_email(res.index, "root/a");
    const auto* eb = find_email(res.index, "root/b");
    REQUIRE(ea);
    REQUIRE(eb);
    CHECK(ea->replied);
    CHECK(ea->reply_timestamp == Timestamp{20});
    CHECK_FALSE(eb->replied);
    // root expands to two Emails and other to two more
    CHECK(res.index.size() == 4);
}

TEST_CASE("duplicate message ids are dropped") {
    std::vector<RawMessage> ms{msg("m", 10, "x", {"a"}), msg("m", 10, "x", {"a"}), msg("r", 11, "a", {"x"}, "m")};
    auto res = ingest(ms, kSplit);
    CHECK(res.report.duplicates == 1);
    CHECK(res.index.size() == 1);
}

TEST_CASE("sender as sole recipient yields no Email") {
    std::vector<RawMessage> ms{msg("self", 10, "a", {"a"}), msg("m", 12, "x", {"a"}), msg("r", 13, "a", {"x"}, "m")};
    auto res = ingest(ms, kSplit);
    CHECK(res.report.sole_recipient == 1);
    CHECK_FALSE(res.index.find("self/a"));
}

TEST_CASE("third-party and clock-skewed replies do not label") {
    std::vector<RawMessage> ms{
        msg("m", 50, "x", {"a", "b"}),
        msg("third", 60, "z", {"x"}, "m"),  // z never received m
        msg("skew", 40, "b", {"x"}, "m"),   // before the root
        msg("n", 70, "y", {"a", "b"}),
        msg("ra", 80, "a", {"y"}, "n"),
        msg("rb", 81, "b", {"y"}, "n"),
    };
    auto res = ingest(ms, kSplit);
    REQUIRE(find_email(res.index, "m/a"));
    CHECK_FALSE(find_email(res.index, "m/a")->replied);
    CHECK_FALSE(find_email(res.index, "m/b")->replied);
    CHECK(find_email(res.index, "n/a")->replied);
}

TEST_CASE("recipients who never reply are excluded") {
    std::vector<RawMessage> ms{msg("m", 10, "x", {"a", "quiet"}), msg("r", 11, "a", {"x"}, "m")};
    auto res = ingest(ms, kSplit);
    CHECK(res.index.has_recipient("a"));
    CHECK_FALSE(res.index.has_recipient("quiet"));
    CHECK(res.report.excluded_emails == 1);
}

TEST_CASE("malformed lines are counted, never fatal") {
    std::istringstream in(
        "{\"message_id\":\"m\",\"timestamp\":5,\"sender\":\"x\",\"recipients\":[\"a\"],\"subject\":\"\",\"body\":\"\"}\n"
        "not json\n"
        "{\"message_id\":7}\n"
        "\n");
    IngestReport rep;
    auto ms = read_jsonl(in, rep);
    CHECK(ms.size() == 1);
    CHECK(rep.malformed == 2);
}

TEST_CASE("brute-force labeler agrees on random 20-message fixtures") {
    std::mt19937_64 rng(11);
    const std::vector<std::string> people{"p0", "p1", "p2", "p3", "p4"};
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<RawMessage> ms;
        std::uniform_int_distribution<int> who(0, 4), t(0, 290);
        for (int i = 0; i < 20; ++i) {
            const auto from = people[static_cast<std::size_t>(who(rng))];
            std::vector<std::string> to;
            for (const auto& p : people)
                if (p != from && std::bernoulli_distribution(0.4)(rng)) to.push_back(p);
            if (to.empty()) to.push_back(from == "p0" ? "p1" : "p0");
            std::optional<std::string> rt;
            if (i > 0 && std::bernoulli_distribution(0.5)(rng))
                rt = "m" + std::to_string(std::uniform_int_distribution<int>(0, i - 1)(rng));
            ms.push_back(msg("m" + std::to_string(i), t(rng), from, to, rt));
        }
        IngestResult res;
        try {
            res = ingest(ms, kSplit);
        } catch (const Error&) {
            continue;  // nobody replied to anything
        }
        for (const auto& e : res.index.emails()) {
            bool expect = false;
            for (const auto& m : ms)
                if (m.sender == e.recipient_id && m.reply_to == e.source_message_id && *m.timestamp >= e.timestamp)
                    expect = true;
            CHECK(e.replied == expect);
        }
        // idempotent relabeling
        auto again = label_replies(res.index, res.messages);
        for (std::size_t i = 0; i < res.index.size(); ++i) CHECK(again.email(i).replied == res.index.email(i).replied);
    }
}

TEST_CASE("ingest is independent of input order") {
    std::vector<RawMessage> ms{msg("a1", 10, "x", {"a", "b"}), msg("a2", 20, "y", {"b"}), msg("r1", 21, "a", {"x"}, "a1"),
                               msg("r2", 25, "b", {"y"}, "a2"), msg("a3", 150, "x", {"a"})};
    auto base = ingest(ms, kSplit);
    std::mt19937_64 rng(3);
    for (int k = 0; k < 10; ++k) {
        std::shuffle(ms.begin(), ms.end(), rng);
        auto other = ingest(ms, kSplit);
        REQUIRE(other.index.size() == base.index.size());
        for (std::size_t i = 0; i < base.index.size(); ++i) {
            CHECK(other.index.email(i).email_id == base.index.email(i).email_id);
            CHECK(other.index.email(i).replied == base.index.email(i).replied);
        }
    }
}

TEST_CASE("split boundaries are inclusive upper bounds") {
    CHECK(partition_of(100, kSplit) == Partition::train);
    CHECK(partition_of(101, kSplit) == Partition::validation);
    CHECK(partition_of(200, kSplit) == Partition::validation);
    CHECK(partition_of(201, kSplit) == Partition::test);

    // ten timestamps straddling the boundaries
    const std::vector<Timestamp> ts{0, 99, 100, 101, 150, 200, 201, 250, 299, 300};
    std::vector<RawMessage> ms;
    for (std::size_t i = 0; i < ts.size(); ++i) ms.push_back(msg("m" + std::to_string(i), ts[i], "x", {"a"}));
    ms.push_back(msg("r", 1, "a", {"x"}, "m0"));
    auto res = ingest(ms, kSplit);
    auto s = split(res.index, kSplit, &res.report);
    CHECK(s.train.size() == 3);
    CHECK(s.validation.size() == 3);
    CHECK(s.test.size() == 4);
    CHECK(res.report.partitions[0].positives == 1);
}

TEST_CASE("everything before train_end leaves later partitions empty with warnings") {
    std::vector<RawMessage> ms{msg("m", 10, "x", {"a"}), msg("r", 11, "a", {"x"}, "m")};
    auto res = ingest(ms, kSplit);
    auto s = split(res.index, kSplit, &res.report);
    CHECK(s.train.size() == 1);
    CHECK(s.validation.empty());
    CHECK(s.test.empty());
    CHECK(res.report.warnings.size() >= 2);
}

TEST_CASE("invalid split and empty corpus are errors") {
    CHECK_THROWS_AS(SplitSpec({5, 5, 9}).validate(), Error);
    std::vector<RawMessage> ms{msg("m", 10, "x", {"a"})};  // a never replies
    CHECK_THROWS_AS(ingest(ms, kSplit), Error);
}

TEST_CASE("timelines are sorted by timestamp") {
    std::vector<RawMessage> ms{msg("m3", 30, "x", {"a"}), msg("m1", 10, "x", {"a"}), msg("m2", 20, "y", {"a"}),
                               msg("r", 40, "a", {"x"}, "m1")};
    auto res = ingest(ms, kSplit);
    const auto& tl = res.index.timeline("a");
    REQUIRE(tl.size() == 3);
    for (std::size_t i = 1; i < tl.size(); ++i)
        CHECK(res.index.email(tl[i - 1]).timestamp <= res.index.email(tl[i]).timestamp);
}
