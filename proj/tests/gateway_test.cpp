// Copyright 2026 The anchoropt Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <filesystem>
#include <thread>

#include "anchoropt/gateway.hpp"
#include "anchoropt/openai_transport.hpp"
#include "support/fixtures.hpp"

namespace anchoropt {
namespace {

using testing::ExplodingTransport;
using testing::FakeTransport;

CompletionRequest request(std::string prompt, Stage tag = Stage::translate) {
  return {std::move(prompt), 0.0, 64, tag};
}

std::shared_ptr<Cassette> cassette_with(
    std::initializer_list<std::tuple<std::string, std::string, std::string>> rows) {
  auto c = std::make_shared<Cassette>();
  for (const auto& [tag, prompt, response] : rows) c->append(make_entry(tag, prompt, response));
  return c;
}

RetryPolicy fast_retry(int attempts = 3) { return {attempts, std::chrono::milliseconds(1), 2.0}; }

TEST(Replay, ServesStoredResponseVerbatim) {
  auto gw = Gateway::replay(cassette_with({{"translate", "prompt A", "  reply\r\nA  "}}));
  EXPECT_EQ(gw->complete(request("prompt A")), "  reply\r\nA  ");
}

TEST(Replay, UnknownFingerprintIsReplayMiss) {
  auto gw = Gateway::replay(cassette_with({{"translate", "prompt A", "reply"}}));
  EXPECT_THROW(gw->complete(request("prompt B")), ReplayMiss);
  // same prompt under another stage tag is a different request
  EXPECT_THROW(gw->complete(request("prompt A", Stage::verify)), ReplayMiss);
}

TEST(Replay, SameRequestTwiceIsByteIdentical) {
  auto gw = Gateway::replay(cassette_with({{"verify", "judge", "ANSWER:\n=====\nYES\n====="}}));
  auto first = gw->complete(request("judge", Stage::verify));
  auto second = gw->complete(request("judge", Stage::verify));
  EXPECT_EQ(first, second);
}

TEST(Replay, RepeatedFingerprintsServeInRecordedOrderThenStick) {
  auto c = cassette_with({{"translate", "p", "v0"}, {"translate", "p", "v1"}, {"translate", "q", "w"}});
  auto gw = Gateway::replay(c);
  EXPECT_EQ(gw->complete(request("p")), "v0");
  EXPECT_EQ(gw->complete(request("q")), "w");
  EXPECT_EQ(gw->complete(request("p")), "v1");
  EXPECT_EQ(gw->complete(request("p")), "v1");

  auto fresh = gw->fork();
  EXPECT_EQ(fresh->complete(request("p")), "v0");
}

TEST(Replay, NeverTouchesTheTransport) {
  auto boom = std::make_shared<ExplodingTransport>();
  auto c = cassette_with({{"translate", "p", "v0"}});
  c->append(make_entry(kEmbedTag, "text", "[1.0, 2.0]"));
  auto gw = Gateway::create(GatewayMode::replay, c, boom);
  EXPECT_EQ(gw->complete(request("p")), "v0");
  EXPECT_EQ(gw->embed("text").values(), (std::vector<double>{1.0, 2.0}));
  EXPECT_THROW(gw->complete(request("other")), ReplayMiss);
  EXPECT_EQ(boom->calls.load(), 0);
}

TEST(Replay, RequiresCassette) { EXPECT_THROW(Gateway::replay(nullptr), UsageError); }

TEST(Fingerprint, NormalizesOnlyLineEndingsAndTrailingWhitespace) {
  const auto base = request_fingerprint("verify", "line one\nline two");
  EXPECT_EQ(request_fingerprint("verify", "line one\r\nline two"), base);
  EXPECT_EQ(request_fingerprint("verify", "line one   \nline two\t\n\n"), base);
  EXPECT_EQ(request_fingerprint("verify", "line one\rline two"), base);
  EXPECT_NE(request_fingerprint("verify", "line  one\nline two"), base);
  EXPECT_NE(request_fingerprint("verify", " line one\nline two"), base);
  EXPECT_NE(request_fingerprint("translate", "line one\nline two"), base);
  EXPECT_EQ(base.size(), 64u);
}

TEST(Fingerprint, IgnoresSamplingParameters) {
  auto gw = Gateway::replay(cassette_with({{"extract", "describe", "ok"}}));
  CompletionRequest req{"describe", 0.9, 17, Stage::extract};
  EXPECT_EQ(gw->complete(req), "ok");
}

TEST(Sha256, KnownDigest) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Record, AppendsEntriesAndReplaysThem) {
  auto transport = std::make_shared<FakeTransport>();
  auto sink = std::make_shared<Cassette>();
  auto path = std::filesystem::temp_directory_path() / "anchoropt_record_test.jsonl";
  std::filesystem::remove(path);
  sink->attach_file(path.string());
  auto gw = Gateway::record(transport, sink, fast_retry());
  auto text = gw->complete(request("some prompt", Stage::reconstruct));
  auto vec = gw->embed("sentence");
  ASSERT_EQ(sink->size(), 2u);

  auto entries = sink->entries();
  EXPECT_EQ(entries[0].tag, "reconstruct");
  EXPECT_EQ(entries[0].fingerprint, request_fingerprint("reconstruct", "some prompt"));
  EXPECT_EQ(entries[0].prompt_sha, sha256_hex("some prompt"));
  EXPECT_EQ(entries[0].response, text);
  EXPECT_EQ(entries[1].tag, "embed");

  auto reloaded = std::make_shared<Cassette>(Cassette::load(path.string()));
  EXPECT_EQ(reloaded->entries(), entries);
  auto line = testing::read_file(path);
  auto first = nlohmann::json::parse(line.substr(0, line.find('\n')));
  EXPECT_EQ(first.size(), 4u);
  for (const char* key : {"fingerprint", "tag", "prompt_sha", "response"})
    EXPECT_TRUE(first.contains(key)) << key;

  auto replay = Gateway::replay(reloaded);
  EXPECT_EQ(replay->complete(request("some prompt", Stage::reconstruct)), text);
  EXPECT_EQ(replay->embed("sentence"), vec);
  std::filesystem::remove(path);
}

TEST(Live, RetriesTransientFailures) {
  auto transport = std::make_shared<FakeTransport>();
  transport->failures = 2;
  auto gw = Gateway::live(transport, fast_retry(3));
  EXPECT_NO_THROW(gw->complete(request("p")));
  EXPECT_EQ(transport->calls.load(), 3);
}

TEST(Live, GivesUpAfterConfiguredAttempts) {
  auto transport = std::make_shared<FakeTransport>();
  transport->failures = 3;
  auto gw = Gateway::live(transport, fast_retry(3));
  EXPECT_THROW(gw->complete(request("p")), TransportError);
  EXPECT_EQ(transport->calls.load(), 3);
}

TEST(Live, PermanentFailureIsNotRetried) {
  auto transport = std::make_shared<FakeTransport>();
  transport->failures = 1;
  transport->transient = false;
  auto gw = Gateway::live(transport, fast_retry(3));
  EXPECT_THROW(gw->embed("x"), TransportError);
  EXPECT_EQ(transport->calls.load(), 1);
}

TEST(Preconditions, EmptyInputsAreUsageErrors) {
  auto gw = Gateway::live(std::make_shared<FakeTransport>());
  EXPECT_THROW(gw->embed(""), UsageError);
  EXPECT_THROW(gw->complete(request("")), UsageError);
  EXPECT_THROW(gw->complete({"p", -1.0, 10, Stage::extract}), UsageError);
  EXPECT_THROW(gw->complete({"p", 0.0, 0, Stage::extract}), UsageError);
  EXPECT_THROW(EmbeddingVector({1.0, std::nan("")}), UsageError);
  EXPECT_THROW(EmbeddingVector(std::vector<double>{}), UsageError);
  EXPECT_THROW(Gateway::record(std::make_shared<FakeTransport>(), nullptr), UsageError);
}

TEST(Embed, IdenticalTextGivesIdenticalVectors) {
  auto gw = Gateway::live(std::make_shared<FakeTransport>());
  EXPECT_EQ(gw->embed("same words"), gw->embed("same words"));
}

TEST(Stage, TemperatureDefaults) {
  SamplingConfig cfg{0.4, 100};
  EXPECT_EQ(stage_temperature(Stage::verify, cfg), 0.0);
  EXPECT_EQ(stage_temperature(Stage::reconstruct, cfg), 0.0);
  EXPECT_EQ(stage_temperature(Stage::translate, cfg), 0.4);
  EXPECT_EQ(stage_temperature(Stage::extract, cfg), 0.4);
  EXPECT_EQ(stage_temperature(Stage::debug, cfg), 0.4);
  EXPECT_THROW(parse_stage("embed"), UsageError);
}

TEST(CassetteFile, Errors) {
  EXPECT_THROW(Cassette::load("/nonexistent/cassette.jsonl"), IoError);
  auto path = std::filesystem::temp_directory_path() / "anchoropt_bad_cassette.jsonl";
  {
    std::ofstream out(path);
    out << R"({"fingerprint":"a","tag":"verify","prompt_sha":"b","response":"c"})" << "\n\n"
        << "{broken\n";
  }
  EXPECT_THROW(Cassette::load(path.string()), FormatError);
  std::filesystem::remove(path);
}

TEST(Concurrency, ParallelReplayAndRecord) {
  auto c = std::make_shared<Cassette>();
  for (int i = 0; i < 64; ++i)
    c->append(make_entry("translate", "prompt " + std::to_string(i), "reply " + std::to_string(i)));
  auto gw = Gateway::replay(c);
  std::vector<std::thread> threads;
  std::atomic<int> mismatches{0};
  for (int t = 0; t < 8; ++t)
    threads.emplace_back([&, t] {
      for (int i = t; i < 64; i += 8)
        if (gw->complete(request("prompt " + std::to_string(i))) != "reply " + std::to_string(i))
          ++mismatches;
    });
  for (auto& th : threads) th.join();
  EXPECT_EQ(mismatches.load(), 0);

  auto sink = std::make_shared<Cassette>();
  auto rec = Gateway::record(std::make_shared<FakeTransport>(), sink);
  threads.clear();
  for (int t = 0; t < 8; ++t)
    threads.emplace_back([&, t] {
      for (int i = 0; i < 25; ++i) rec->complete(request("p" + std::to_string(t * 100 + i)));
    });
  for (auto& th : threads) th.join();
  EXPECT_EQ(sink->size(), 200u);
}

class OpenAiTransportTest : public ::testing::Test {
 protected:
  void SetUp() override {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      ++chat_calls_;
      last_auth_ = req.get_header_value("Authorization");
      auto body = nlohmann::json::parse(req.body);
      last_body_ = body;
      if (fail_next_ > 0) {
        --fail_next_;
        res.status = 503;
        return;
      }
      if (body["messages"][0]["content"] == "bad request") {
        res.status = 400;
        res.set_content(R"({"error":"nope"})", "application/json");
        return;
      }
      nlohmann::json reply = {
          {"choices", {{{"message", {{"role", "assistant"},
                                     {"content", "echo: " + body["messages"][0]["content"].get<std::string>()}}}}}}};
      res.set_content(reply.dump(), "application/json");
    });
    server_.Post("/v1/embeddings", [](const httplib::Request& req, httplib::Response& res) {
      auto body = nlohmann::json::parse(req.body);
      nlohmann::json reply = {{"data", {{{"embedding", {0.25, -0.5, static_cast<double>(body["input"].get<std::string>().size())}}}}}};
      res.set_content(reply.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  void TearDown() override {
    server_.stop();
    thread_.join();
  }

  ProviderConfig config() const {
    ProviderConfig cfg;
    cfg.base_url = "http://127.0.0.1:" + std::to_string(port_) + "/v1/";
    cfg.chat_model = "test-chat";
    cfg.embedding_model = "test-embed";
    cfg.api_key = "sk-test";
    cfg.timeout_seconds = 5;
    return cfg;
  }

  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> chat_calls_{0};
  std::atomic<int> fail_next_{0};
  std::string last_auth_;
  nlohmann::json last_body_;
};

TEST_F(OpenAiTransportTest, ChatCompletionWireFormat) {
  auto gw = Gateway::live(std::make_shared<OpenAiTransport>(config()), fast_retry());
  EXPECT_EQ(gw->complete({"hello", 0.3, 77, Stage::translate}), "echo: hello");
  EXPECT_EQ(last_auth_, "Bearer sk-test");
  EXPECT_EQ(last_body_["model"], "test-chat");
  EXPECT_EQ(last_body_["max_tokens"], 77);
  EXPECT_DOUBLE_EQ(last_body_["temperature"].get<double>(), 0.3);
}

TEST_F(OpenAiTransportTest, EmbeddingWireFormat) {
  auto gw = Gateway::live(std::make_shared<OpenAiTransport>(config()), fast_retry());
  EXPECT_EQ(gw->embed("four").values(), (std::vector<double>{0.25, -0.5, 4.0}));
}

TEST_F(OpenAiTransportTest, ServerErrorsAreRetried) {
  fail_next_ = 2;
  auto gw = Gateway::live(std::make_shared<OpenAiTransport>(config()), fast_retry(3));
  EXPECT_EQ(gw->complete(request("again")), "echo: again");
  EXPECT_EQ(chat_calls_.load(), 3);
}

TEST_F(OpenAiTransportTest, ClientErrorsAreNotRetried) {
  auto gw = Gateway::live(std::make_shared<OpenAiTransport>(config()), fast_retry(3));
  EXPECT_THROW(gw->complete(request("bad request")), TransportError);
  EXPECT_EQ(chat_calls_.load(), 1);
}

TEST(OpenAiTransport, UnreachableProviderIsTransportError) {
  ProviderConfig cfg;
  cfg.base_url = "http://127.0.0.1:9/v1";
  cfg.timeout_seconds = 1;
  auto gw = Gateway::live(std::make_shared<OpenAiTransport>(cfg), fast_retry(2));
  EXPECT_THROW(gw->complete(request("p")), TransportError);
  ProviderConfig no_scheme;
  no_scheme.base_url = "no-scheme";
  EXPECT_THROW(OpenAiTransport{no_scheme}, UsageError);
}

}  // namespace
}  // namespace anchoropt
