"""Tests for the prompt-based forecaster adapters."""

import dataclasses
import inspect
import json
from datetime import datetime

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cafbench import scoring
from cafbench.llm import (
    ForecastError,
    HttpEndpoint,
    MockEndpoint,
    ParseRejection,
    RetryPolicy,
    direct_prompt_forecast,
    direct_prompt_parse,
    direct_prompt_render,
    llmp_forecast,
    llmp_parse_value,
    llmp_render,
)
from cafbench.timeseries import (
    ContextBlocks,
    Frequency,
    TaskInstance,
    TimeSeriesWindow,
)
from cafbench.scoring import ConstraintSpec


def make_instance(future_values=(2.0, 2.5, 3.0), with_context=True):
    history = TimeSeriesWindow(
        start=datetime(2025, 3, 1),
        frequency=Frequency.DAILY,
        values=np.array([1.5, 0.0, 0.1, 12.25]),
    )
    future = TimeSeriesWindow(
        start=datetime(2025, 3, 5),
        frequency=Frequency.DAILY,
        values=np.asarray(future_values, dtype=float),
    )
    context = (
        ContextBlocks(
            background="Traffic sensor data.",
            scenario="A lane closure is planned.",
            constraints_text="Values are at most 100.00.",
        )
        if with_context
        else ContextBlocks()
    )
    return TaskInstance(
        task_id="mini",
        instance_seed=0,
        history=history,
        future=future,
        context=context,
        roi=frozenset(),
        constraint=ConstraintSpec.none(),
        cluster_id="mini",
        context_types=frozenset({"future"}),
        adjustments={},
    )


def forecast_block(values, timestamps):
    lines = "\n".join(
        f"({ts.strftime('%Y-%m-%d %H:%M:%S')}, {np.format_float_positional(v, trim='-')})"
        for ts, v in zip(timestamps, values)
    )
    return f"<forecast>\n{lines}\n</forecast>"


class RecordingEndpoint:
    """Wraps another endpoint and keeps every prompt it was asked."""

    def __init__(self, inner):
        self.inner = inner
        self.prompts = []

    def complete(self, prompt, **kwargs):
        self.prompts.append(prompt)
        return self.inner.complete(prompt, **kwargs)


class TestMockEndpoint:
    def test_first_matching_rule_wins(self):
        endpoint = MockEndpoint(
            [
                {"prompt_substring_match": "alpha", "response": "one"},
                {"prompt_substring_match": "alp", "response": "two"},
            ]
        )
        assert endpoint.complete("xx alpha yy") == "one"

    def test_string_response_repeats(self):
        endpoint = MockEndpoint([{"prompt_substring_match": "p", "response": "r"}])
        assert [endpoint.complete("p") for _ in range(3)] == ["r", "r", "r"]

    def test_list_response_advances_and_clamps(self):
        endpoint = MockEndpoint(
            [{"prompt_substring_match": "p", "response": ["a", "b", "c"]}]
        )
        assert [endpoint.complete("p") for _ in range(5)] == ["a", "b", "c", "c", "c"]

    def test_counters_are_per_exact_prompt(self):
        endpoint = MockEndpoint(
            [{"prompt_substring_match": "p", "response": ["a", "b"]}]
        )
        assert endpoint.complete("p one") == "a"
        assert endpoint.complete("p two") == "a"
        assert endpoint.complete("p one") == "b"

    def test_no_matching_rule_raises(self):
        endpoint = MockEndpoint([{"prompt_substring_match": "zzz", "response": "r"}])
        with pytest.raises(LookupError):
            endpoint.complete("nothing here")

    def test_from_file(self, tmp_path):
        path = tmp_path / "rules.json"
        path.write_text(
            json.dumps([{"prompt_substring_match": "p", "response": "ok"}]),
            encoding="utf-8",
        )
        endpoint = MockEndpoint.from_file(str(path))
        assert endpoint.complete("p") == "ok"

    def test_invalid_rules_rejected(self):
        with pytest.raises(ValueError, match="prompt_substring_match"):
            MockEndpoint([{"response": "r"}])
        with pytest.raises(ValueError, match="non-empty list"):
            MockEndpoint([{"prompt_substring_match": "p", "response": []}])
        with pytest.raises(ValueError, match="must be a string"):
            MockEndpoint([{"prompt_substring_match": 3, "response": "r"}])


class TestHttpEndpoint:
    def test_missing_credential_names_the_variable(self, monkeypatch):
        monkeypatch.delenv("CAF_TEST_KEY", raising=False)
        with pytest.raises(ValueError, match="CAF_TEST_KEY"):
            HttpEndpoint("https://api.example.com/v1", "some-model", "CAF_TEST_KEY")

    def test_init_validation(self, monkeypatch):
        monkeypatch.setenv("CAF_TEST_KEY", "k")
        with pytest.raises(ValueError, match="base_url"):
            HttpEndpoint("", "m", "CAF_TEST_KEY")
        with pytest.raises(ValueError, match="model"):
            HttpEndpoint("https://x", "", "CAF_TEST_KEY")
        with pytest.raises(ValueError, match="max_concurrent"):
            HttpEndpoint("https://x", "m", "CAF_TEST_KEY", max_concurrent=0)
        with pytest.raises(ValueError, match="min_interval_s"):
            HttpEndpoint("https://x", "m", "CAF_TEST_KEY", min_interval_s=-1)

    def test_request_payload_and_response_extraction(self, monkeypatch):
        monkeypatch.setenv("CAF_TEST_KEY", "secret-token")
        endpoint = HttpEndpoint("https://api.example.com/v1/", "some-model", "CAF_TEST_KEY")
        captured = {}

        class FakeResponse:
            status_code = 200
            text = ""

            @staticmethod
            def json():
                return {"choices": [{"message": {"content": "42.5"}}]}

        def fake_post(url, json=None, headers=None, timeout=None):
            captured.update(url=url, payload=json, headers=headers, timeout=timeout)
            return FakeResponse()

        import requests

        monkeypatch.setattr(requests, "post", fake_post)
        out = endpoint.complete("hello", stop="\n", max_tokens=12, temperature=1.0, seed=7)
        assert out == "42.5"
        assert captured["url"] == "https://api.example.com/v1/chat/completions"
        assert captured["headers"]["Authorization"] == "Bearer secret-token"
        payload = captured["payload"]
        assert payload["model"] == "some-model"
        assert payload["messages"] == [{"role": "user", "content": "hello"}]
        assert payload["temperature"] == 1.0
        assert payload["max_tokens"] == 12
        assert payload["stop"] == ["\n"]
        assert payload["seed"] == 7

    def test_optional_fields_omitted(self, monkeypatch):
        monkeypatch.setenv("CAF_TEST_KEY", "k")
        endpoint = HttpEndpoint("https://api.example.com", "m", "CAF_TEST_KEY")
        captured = {}

        class FakeResponse:
            status_code = 200
            text = ""

            @staticmethod
            def json():
                return {"choices": [{"message": {"content": "x"}}]}

        import requests

        monkeypatch.setattr(
            requests, "post", lambda url, json=None, **kw: captured.update(payload=json) or FakeResponse()
        )
        endpoint.complete("p")
        assert "stop" not in captured["payload"]
        assert "seed" not in captured["payload"]

    def test_http_error_raises(self, monkeypatch):
        monkeypatch.setenv("CAF_TEST_KEY", "k")
        endpoint = HttpEndpoint("https://api.example.com", "m", "CAF_TEST_KEY")

        class FakeResponse:
            status_code = 429
            text = "slow down"

        import requests

        monkeypatch.setattr(requests, "post", lambda *a, **kw: FakeResponse())
        with pytest.raises(RuntimeError, match="429"):
            endpoint.complete("p")


class TestDirectPromptRender:
    def test_full_prompt_with_context(self):
        instance = make_instance()
        expected = (
            "I have a time series forecasting task for you.\n"
            "\n"
            "Here is some context about the task. Make sure to factor in any background knowledge,\n"
            "satisfy any constraints, and respect any scenarios.\n"
            "<context>\n"
            "Background: Traffic sensor data.\n"
            "Scenario: A lane closure is planned.\n"
            "Constraints: Values are at most 100.00.\n"
            "</context>\n"
            "\n"
            "Here is a historical time series in (timestamp, value) format:\n"
            "<history>\n"
            "(2025-03-01 00:00:00, 1.5)\n"
            "(2025-03-02 00:00:00, 0)\n"
            "(2025-03-03 00:00:00, 0.1)\n"
            "(2025-03-04 00:00:00, 12.25)\n"
            "</history>\n"
            "\n"
            "Now please predict the value at the following timestamps: "
            "['2025-03-05 00:00:00' '2025-03-06 00:00:00' '2025-03-07 00:00:00'].\n"
            "\n"
            "Return the forecast in (timestamp, value) format in between <forecast> and </forecast> tags.\n"
            "Do not include any other information (e.g., comments) in the forecast.\n"
            "\n"
            "Example:\n"
            "<history>\n"
            "(t1, v1)\n"
            "(t2, v2)\n"
            "(t3, v3)\n"
            "</history>\n"
            "<forecast>\n"
            "(t4, v4)\n"
            "(t5, v5)\n"
            "</forecast>"
        )
        assert direct_prompt_render(instance) == expected

    def test_empty_context_renders_empty_block(self):
        prompt = direct_prompt_render(make_instance(with_context=False))
        assert "<context>\n\n</context>" in prompt
        assert "Background:" not in prompt
        assert "Scenario:" not in prompt
        assert "Constraints:" not in prompt

    def test_partial_context_renders_only_present_blocks(self):
        instance = dataclasses.replace(
            make_instance(), context=ContextBlocks(scenario="Only a scenario.")
        )
        prompt = direct_prompt_render(instance)
        assert "<context>\nScenario: Only a scenario.\n</context>" in prompt
        assert "Background:" not in prompt
        assert "Constraints:" not in prompt


class TestDirectPromptParse:
    def test_round_trip(self):
        instance = make_instance()
        timestamps = instance.future.timestamps()
        values = [2.0, -0.5, 31.25]
        parsed = direct_prompt_parse(forecast_block(values, timestamps), timestamps)
        np.testing.assert_array_equal(parsed, values)

    @settings(max_examples=50, deadline=None)
    @given(
        st.lists(
            st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False).map(
                lambda v: round(v, 4)
            ),
            min_size=1,
            max_size=8,
        )
    )
    def test_round_trip_property(self, values):
        start = datetime(2025, 3, 5)
        timestamps = [Frequency.DAILY.advance(start, i) for i in range(len(values))]
        parsed = direct_prompt_parse(forecast_block(values, timestamps), timestamps)
        np.testing.assert_array_equal(parsed, values)

    def test_surrounding_prose_is_ignored(self):
        instance = make_instance()
        timestamps = instance.future.timestamps()
        completion = (
            "Sure, here is my forecast considering the lane closure.\n"
            + forecast_block([1.0, 2.0, 3.0], timestamps)
            + "\nLet me know if you need anything else."
        )
        parsed = direct_prompt_parse(completion, timestamps)
        np.testing.assert_array_equal(parsed, [1.0, 2.0, 3.0])

    def test_first_block_wins(self):
        timestamps = make_instance().future.timestamps()
        completion = (
            forecast_block([1.0, 2.0, 3.0], timestamps)
            + "\n"
            + forecast_block([9.0, 9.0, 9.0], timestamps)
        )
        np.testing.assert_array_equal(
            direct_prompt_parse(completion, timestamps), [1.0, 2.0, 3.0]
        )

    def test_blank_lines_tolerated(self):
        timestamps = make_instance().future.timestamps()
        body = "\n\n".join(
            f"({ts.strftime('%Y-%m-%d %H:%M:%S')}, 1)" for ts in timestamps
        )
        parsed = direct_prompt_parse(f"<forecast>\n{body}\n\n</forecast>", timestamps)
        np.testing.assert_array_equal(parsed, [1.0, 1.0, 1.0])

    def test_missing_tags(self):
        timestamps = make_instance().future.timestamps()
        with pytest.raises(ParseRejection) as exc:
            direct_prompt_parse("(2025-03-05 00:00:00, 1)", timestamps)
        assert exc.value.reason == "missing_tags"

    def test_wrong_count(self):
        timestamps = make_instance().future.timestamps()
        with pytest.raises(ParseRejection) as exc:
            direct_prompt_parse(forecast_block([1.0, 2.0], timestamps[:2]), timestamps)
        assert exc.value.reason == "wrong_count"

    def test_timestamp_mismatch(self):
        timestamps = make_instance().future.timestamps()
        shuffled = [timestamps[1], timestamps[0], timestamps[2]]
        with pytest.raises(ParseRejection) as exc:
            direct_prompt_parse(forecast_block([1.0, 2.0, 3.0], shuffled), timestamps)
        assert exc.value.reason == "timestamp_mismatch"

    def test_bad_number_and_scientific_flag(self):
        timestamps = make_instance().future.timestamps()[:1]
        block = "<forecast>\n(2025-03-05 00:00:00, 1e3)\n</forecast>"
        with pytest.raises(ParseRejection) as exc:
            direct_prompt_parse(block, timestamps)
        assert exc.value.reason == "bad_number"
        parsed = direct_prompt_parse(block, timestamps, allow_scientific=True)
        np.testing.assert_array_equal(parsed, [1000.0])

    def test_extra_content(self):
        timestamps = make_instance().future.timestamps()
        block = forecast_block([1.0, 2.0, 3.0], timestamps).replace(
            "</forecast>", "# all done\n</forecast>"
        )
        with pytest.raises(ParseRejection) as exc:
            direct_prompt_parse(block, timestamps)
        assert exc.value.reason == "extra_content"

    def test_string_timestamps_accepted(self):
        parsed = direct_prompt_parse(
            "<forecast>\n(t9, 5.5)\n</forecast>", ["t9"]
        )
        np.testing.assert_array_equal(parsed, [5.5])


class TestDirectPromptForecast:
    def test_collects_required_samples(self):
        instance = make_instance()
        block = forecast_block([2.0, 2.5, 3.0], instance.future.timestamps())
        endpoint = MockEndpoint(
            [{"prompt_substring_match": "forecasting task", "response": block}]
        )
        policy = RetryPolicy(samples_required=4)
        ensemble = direct_prompt_forecast(endpoint, instance, policy, seed=1)
        assert ensemble.trajectories.shape == (4, 3)
        np.testing.assert_array_equal(
            ensemble.trajectories, np.tile([2.0, 2.5, 3.0], (4, 1))
        )
        assert endpoint.calls == 4

    def test_nine_rejections_then_success_per_sample(self):
        instance = make_instance()
        good = forecast_block([1.0, 1.0, 1.0], instance.future.timestamps())
        script = (["no tags here"] * 9 + [good]) * 3
        endpoint = MockEndpoint(
            [{"prompt_substring_match": "forecasting task", "response": script}]
        )
        policy = RetryPolicy(max_attempts_per_sample=10, samples_required=3)
        ensemble = direct_prompt_forecast(endpoint, instance, policy, seed=0)
        assert ensemble.trajectories.shape == (3, 3)
        assert endpoint.calls == 30

    def test_exhaustion_reports_reason_histogram(self):
        instance = make_instance()
        timestamps = instance.future.timestamps()
        wrong_count = forecast_block([1.0], timestamps[:1])
        bad_number = forecast_block([1.0, 2.0, 3.0], timestamps).replace("3)", "x)")
        endpoint = MockEndpoint(
            [
                {
                    "prompt_substring_match": "forecasting task",
                    "response": ["no tags", wrong_count, bad_number],
                }
            ]
        )
        policy = RetryPolicy(max_attempts_per_sample=3, samples_required=2)
        with pytest.raises(ForecastError) as exc:
            direct_prompt_forecast(endpoint, instance, policy, seed=0)
        err = exc.value
        assert err.attempts == 3
        assert err.reasons == {"missing_tags": 1, "wrong_count": 1, "bad_number": 1}
        assert err.last_reason == "bad_number"
        assert "bad_number" in str(err)

    def test_deterministic_across_runs(self):
        instance = make_instance()
        block = forecast_block([4.0, 5.0, 6.0], instance.future.timestamps())
        rules = [{"prompt_substring_match": "forecasting", "response": block}]
        first = direct_prompt_forecast(
            MockEndpoint(rules), instance, RetryPolicy(samples_required=3), seed=9
        )
        second = direct_prompt_forecast(
            MockEndpoint(rules), instance, RetryPolicy(samples_required=3), seed=9
        )
        np.testing.assert_array_equal(first.trajectories, second.trajectories)


class TestLlmpRender:
    def test_full_prompt_with_context(self):
        expected = (
            "Forecast the future values of this time series, while considering "
            "the following background knowledge, scenario, and constraints.\n"
            "\n"
            "Background knowledge:\n"
            "Traffic sensor data.\n"
            "\n"
            "Scenario:\n"
            "A lane closure is planned.\n"
            "\n"
            "Constraints:\n"
            "Values are at most 100.00.\n"
            "\n"
            "2025-03-01 00:00:00,1.5\n"
            "2025-03-02 00:00:00,0\n"
            "2025-03-03 00:00:00,0.1\n"
            "2025-03-04 00:00:00,12.25\n"
            "2025-03-05 00:00:00,"
        )
        assert llmp_render(make_instance()) == expected

    def test_headers_survive_empty_context(self):
        prompt = llmp_render(make_instance(with_context=False))
        assert "Background knowledge:\n" in prompt
        assert "Scenario:\n" in prompt
        assert "Constraints:\n" in prompt
        assert prompt.endswith("2025-03-04 00:00:00,12.25\n2025-03-05 00:00:00,")


class TestLlmpParseValue:
    def test_plain_decimals(self):
        assert llmp_parse_value("4.2") == 4.2
        assert llmp_parse_value(" -17 ") == -17.0
        assert llmp_parse_value("0.125") == 0.125

    def test_rejections(self):
        for text in ("abc", "", "4.2 units", "1e5", "nan", "4,200"):
            with pytest.raises(ParseRejection) as exc:
                llmp_parse_value(text)
            assert exc.value.reason == "bad_number"

    def test_scientific_flag(self):
        assert llmp_parse_value("1e5", allow_scientific=True) == 1e5
        assert llmp_parse_value("-2.5E-3", allow_scientific=True) == -2.5e-3


class TestLlmpForecast:
    def step_rules(self, instance, per_step):
        """One rule per future step keyed on its trailing 'timestamp,' marker,
        latest step first so the longest-matching prompt wins."""
        timestamps = [
            ts.strftime("%Y-%m-%d %H:%M:%S") for ts in instance.future.timestamps()
        ]
        return [
            {"prompt_substring_match": f"\n{timestamps[j]},", "response": per_step[j]}
            for j in reversed(range(len(timestamps)))
        ]

    def test_scripted_values(self):
        instance = make_instance()
        endpoint = MockEndpoint(self.step_rules(instance, ["1.5", "2.25", "-3"]))
        ensemble = llmp_forecast(
            endpoint, instance, RetryPolicy(samples_required=4), seed=2
        )
        assert ensemble.trajectories.shape == (4, 3)
        np.testing.assert_array_equal(
            ensemble.trajectories, np.tile([1.5, 2.25, -3.0], (4, 1))
        )

    def test_prompt_grows_by_value_and_next_timestamp(self):
        instance = make_instance()
        recorder = RecordingEndpoint(
            MockEndpoint(self.step_rules(instance, ["1.5", "2.25", "-3"]))
        )
        llmp_forecast(recorder, instance, RetryPolicy(samples_required=2), seed=0)
        base = llmp_render(instance)
        assert recorder.prompts[0] == base
        assert recorder.prompts[1] == base + "1.5\n2025-03-06 00:00:00,"
        assert recorder.prompts[2] == base + "1.5\n2025-03-06 00:00:00,2.25\n2025-03-07 00:00:00,"

    def test_step_retry_on_bad_value(self):
        instance = make_instance()
        rules = self.step_rules(instance, [["abc", "4.2"], "2.0", "3.0"])
        endpoint = MockEndpoint(rules)
        ensemble = llmp_forecast(
            endpoint, instance, RetryPolicy(samples_required=2), seed=0
        )
        np.testing.assert_array_equal(
            ensemble.trajectories, np.tile([4.2, 2.0, 3.0], (2, 1))
        )
        # Sample 0 pays one extra call for the rejected step.
        assert endpoint.calls == 7

    def test_rejection_budget_exhaustion(self):
        instance = make_instance()
        endpoint = MockEndpoint(self.step_rules(instance, ["abc", "2.0", "3.0"]))
        policy = RetryPolicy(max_attempts_per_sample=3, samples_required=2)
        with pytest.raises(ForecastError) as exc:
            llmp_forecast(endpoint, instance, policy, seed=0)
        assert exc.value.attempts == 3
        assert exc.value.reasons == {"bad_number": 3}

    def test_whitespace_stripped_before_append(self):
        instance = make_instance()
        recorder = RecordingEndpoint(
            MockEndpoint(self.step_rules(instance, [" 2.75 ", "1.0", "1.0"]))
        )
        ensemble = llmp_forecast(
            recorder, instance, RetryPolicy(samples_required=2), seed=0
        )
        assert ensemble.trajectories[0, 0] == 2.75
        assert recorder.prompts[1].endswith("2.75\n2025-03-06 00:00:00,")

    def test_scientific_values_accepted_with_flag(self):
        instance = make_instance()
        rules = self.step_rules(instance, ["1e2", "2.0", "3.0"])
        with pytest.raises(ForecastError):
            llmp_forecast(
                MockEndpoint(rules),
                instance,
                RetryPolicy(max_attempts_per_sample=2, samples_required=2),
                seed=0,
            )
        ensemble = llmp_forecast(
            MockEndpoint(rules),
            instance,
            RetryPolicy(samples_required=2),
            seed=0,
            allow_scientific=True,
        )
        assert ensemble.trajectories[0, 0] == 100.0


class TestRetryPolicy:
    def test_defaults(self):
        policy = RetryPolicy()
        assert policy.max_attempts_per_sample == 10
        assert policy.samples_required == 25

    def test_validation(self):
        with pytest.raises(ValueError, match="max_attempts_per_sample"):
            RetryPolicy(max_attempts_per_sample=0)
        with pytest.raises(ValueError, match="samples_required"):
            RetryPolicy(samples_required=1)


class TestInformationFlow:
    def test_scoring_entry_points_take_no_text_context(self):
        for fn in (scoring.rcrps, scoring.crps_pwm, scoring.tw_crps_constraint):
            names = set(inspect.signature(fn).parameters)
            assert not names & {"context", "background", "scenario", "constraints_text"}
