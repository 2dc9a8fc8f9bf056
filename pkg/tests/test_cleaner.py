import os

import pytest

from surfminer.cleaner import (
    CleaningConfig,
    CleaningReport,
    base_url_of,
    encode_urls,
    filter_invalid_mac,
    filter_nonlatin,
    filter_untargeted,
    has_nonlatin,
    load_cleaning,
    remove_frame_events,
    run_cleaning,
    save_cleaning,
    strip_params,
    sweep_orphans,
    validate_mac,
)
from surfminer.generator import GeneratorConfig, generate_synthetic
from surfminer.logmodel import EventKind, UserKey, merge_logs, parse_log, read_log_file
from surfminer.logmodel.store import ParsedFile

from tests.factories import EXCERPT_LINES, KB_TITLE, KB_URL, SEARCH_URL, SURVEY_URL, EntryFactory


@pytest.fixture
def excerpt_store():
    entries, warnings = parse_log(EXCERPT_LINES, "excerpt.txt")
    return merge_logs([ParsedFile("excerpt.txt", entries, warnings, len(EXCERPT_LINES))])


@pytest.fixture
def excerpt_result(excerpt_store):
    return run_cleaning(excerpt_store)


def test_excerpt_cleaning_report(excerpt_result):
    report = excerpt_result.report

    assert report == CleaningReport(
        loaded=12,
        invalid_mac_removed=0,
        untargeted_removed=2,
        nonlatin_removed=0,
        frame_events_removed=2,
        orphans_removed=1,
    )
    assert report.retained == 7 == len(excerpt_result.entries)
    assert report.loaded == report.retained + report.removed
    assert report.physical_cleaning_ratio == pytest.approx(100.0 * 5 / 12)
    assert excerpt_result.file_reports == {"excerpt.txt": report}


def test_excerpt_retained_entries(excerpt_result):
    retained = [(e.event.code, e.url) for e in excerpt_result.entries]

    assert retained == [
        ("01", "http://www.google.com"),
        ("02", "http://www.google.com"),
        ("01", SEARCH_URL),
        ("02", SEARCH_URL),
        ("01", KB_URL),
        ("02", KB_URL),
        ("01", SEARCH_URL),
    ]
    assert SURVEY_URL not in {e.url for e in excerpt_result.entries}


def test_excerpt_url_table(excerpt_store):
    bases = {base_url_of(e.url) for e in excerpt_store.entries if e.url}

    # five distinct base strings before cleaning, three survive it
    assert bases == {
        "http://www.google.com",
        "http://www.google.com/search",
        KB_URL,
        SURVEY_URL,
        "about:blank",
    }

    result = run_cleaning(excerpt_store)
    assert [u.base_url for u in result.urls] == ["http://www.google.com", "http://www.google.com/search", KB_URL]
    assert [e.url_id for e in result.entries if e.url] == [0, 0, 1, 1, 2, 2, 1]
    assert len(result.params) == 3
    assert result.params[0].raw_params == SEARCH_URL.partition("?")[2]


@pytest.mark.parametrize(
    "mac, zero_invalid, expected",
    [
        ("00-0A-CD-01-C6-69", True, True),
        ("00-0a-cd-01-c6-69", True, False),
        ("00-0A-CD-01-C6", True, False),
        ("00:0A:CD:01:C6:69", True, False),
        ("", True, False),
        ("00-00-00-00-00-00", True, False),
        ("00-00-00-00-00-00", False, True),
    ],
)
def test_validate_mac(mac, zero_invalid, expected):
    assert validate_mac(mac, zero_invalid) is expected


@pytest.mark.parametrize(
    "url, expected",
    [
        ("http://www.google.com/search?hl=fr&q=x", ("http://www.google.com/search", "hl=fr&q=x")),
        ("http://www.google.com", ("http://www.google.com", None)),
        ("http://a.test/p?", ("http://a.test/p", "")),
        ("http://a.test/p?x=1?y=2", ("http://a.test/p", "x=1?y=2")),
    ],
)
def test_strip_params(url, expected):
    assert strip_params(url) == expected


def test_invalid_mac_filter():
    good = EntryFactory()
    bad = EntryFactory(user=UserKey("00-00-00-00-00-00", "x"))
    entries = [good.nb(0, 1, "http://a.test"), bad.nb(1, 2, "http://a.test"), good.close(2, 1)]

    kept, removed = filter_invalid_mac(entries)

    assert removed == 1
    assert [e.user for e in kept] == [good.user, good.user]


@pytest.mark.parametrize(
    "url, targeted",
    [
        ("http://www.google.com", True),
        ("HTTP://www.google.com", True),
        ("ftp://ftp.archive.test/pub", True),
        ("https://secure.test", False),
        ("about:blank", False),
        ("file:///C:/notes.html", False),
        ("res://ieframe.dll/navcancl.htm", False),
        ("http://localhost/intranet", False),
        ("http://127.0.0.1:8080/admin", False),
    ],
)
def test_untargeted_filter(url, targeted):
    f = EntryFactory()
    kept, removed = filter_untargeted([f.nb(0, 1, url), f.close(1, 1)])

    assert removed == (0 if targeted else 1)
    assert kept[-1].event == EventKind.WINDOW_CLOSE


def test_untargeted_schemes_are_configurable():
    f = EntryFactory()
    config = CleaningConfig(allowed_schemes=("http", "https"))

    _, removed = filter_untargeted([f.nb(0, 1, "https://secure.test")], config)

    assert removed == 0


@pytest.mark.parametrize(
    "text, expected",
    [
        ("Google", False),
        (KB_TITLE, False),
        ("Dülŷçğ 2008 - ½ €", False),
        ("أخبار اليوم", True),
        ("Новости дня", True),
        ("今日新闻", True),
        ("", False),
        (None, False),
    ],
)
def test_has_nonlatin(text, expected):
    assert has_nonlatin(text) is expected


def test_nonlatin_filter_checks_decoded_urls():
    f = EntryFactory()
    entries = [
        f.nb(0, 1, "http://www.novosti.test/%D0%BD%D0%BE%D0%B2%D0%BE%D1%81%D1%82%D0%B8"),
        f.dc(1, 1, "http://www.latin.test", "Новости дня"),
        f.dc(2, 1, "http://www.latin.test", "Google"),
    ]

    kept, removed = filter_nonlatin(entries)
    assert removed == 2
    assert [e.title for e in kept] == ["Google"]

    kept, removed = filter_nonlatin(entries, CleaningConfig(nonlatin_filter_on=False))
    assert removed == 0


def _frameset(f, t, window, base, n, title):
    """Top NavigateBegin, n frame requests, n frame completions, top completion."""
    events = [f.nb(t, window, base)]
    events += [f.nb(t + i + 1, window, "%s/frame%d.html" % (base, i + 1)) for i in range(n)]
    events += [f.dc(t + 100 + i, window, "%s/frame%d.html" % (base, i + 1), title) for i in range(n)]
    events.append(f.dc(t + 200, window, base, title, frames=n))
    return events


def test_frameset_law():
    f = EntryFactory()
    entries = []
    t = 0
    for episode in range(1000):
        entries += _frameset(f, t, 1, "http://site%d.test" % (episode % 7), 3, "Page %d" % episode)
        t += 10000
    entries.append(f.close(t, 1))

    kept, removed = remove_frame_events(entries)

    assert removed == 6 * 1000
    assert len(kept) == 2 * 1000 + 1
    assert all(e.url.count("/frame") == 0 for e in kept if e.url)


def test_plain_pages_are_not_frames():
    f = EntryFactory()
    entries = [
        f.nb(0, 1, "http://a.test"),
        f.dc(10, 1, "http://a.test", "A"),
        f.nb(20, 1, "http://b.test"),
        f.nb(25, 1, "http://c.test"),
        f.dc(30, 1, "http://c.test", "C"),
        f.close(40, 1),
    ]

    kept, removed = remove_frame_events(entries)

    assert removed == 0
    assert kept == entries


def test_frames_interleaved_across_windows():
    f = EntryFactory()
    first = _frameset(f, 0, 1, "http://a.test", 2, "A")
    second = [f.nb(3, 2, "http://b.test"), f.dc(150, 2, "http://b.test", "B")]
    entries = sorted(first + second, key=lambda e: (e.ms, e.source_line))

    kept, removed = remove_frame_events(entries)

    assert removed == 4
    assert [e.url for e in kept] == ["http://a.test", "http://b.test", "http://b.test", "http://a.test"]


def test_subsidiary_episode_after_frameset():
    f = EntryFactory()
    entries = _frameset(f, 0, 1, "http://a.test", 1, "Framed")
    entries += [f.nb(300, 1, "http://a.test/extra"), f.dc(400, 1, "http://a.test/extra", "Framed", frames=2)]
    entries += [f.nb(500, 1, "http://b.test"), f.dc(600, 1, "http://b.test", "B")]

    kept, removed = remove_frame_events(entries)

    assert removed == 4
    assert [e.url for e in kept] == ["http://a.test", "http://a.test", "http://b.test", "http://b.test"]


def test_frameless_page_sharing_frameset_title_is_kept():
    f = EntryFactory()
    entries = _frameset(f, 0, 1, "http://portal.test", 1, "Welcome")
    entries += [f.nb(300, 1, "http://other.test/index.html"), f.dc(400, 1, "http://other.test/index.html", "Welcome")]
    entries.append(f.close(500, 1))

    kept, removed = remove_frame_events(entries)

    assert removed == 2
    assert [e.url for e in kept] == [
        "http://portal.test",
        "http://portal.test",
        "http://other.test/index.html",
        "http://other.test/index.html",
        None,
    ]


def test_orphan_sweep():
    f = EntryFactory()
    entries = [
        f.dc(0, 9, "http://a.test", "A"),  # no NavigateBegin for window 9
        f.nb(10, 1, "http://a.test"),
        f.dc(20, 1, "http://a.test", "A"),
        f.close(30, 1),
        f.close(40, 1),  # already closed
        f.close(50, 5),  # never opened
    ]

    kept, removed = sweep_orphans(entries)

    assert removed == 3
    assert kept == entries[1:4]


def test_removed_entries_attributed_to_first_stage():
    f = EntryFactory()
    bad = EntryFactory(user=UserKey("bad", "x"))
    entries = [
        bad.nb(0, 1, "about:blank"),  # invalid MAC and untargeted
        f.nb(1, 1, "about:blank"),
        f.dc(2, 1, "about:blank", "Новости"),  # untargeted and non-Latin
        f.nb(3, 2, "http://a.test"),
        f.close(4, 2),
    ]

    result = run_cleaning(entries)

    assert result.report.invalid_mac_removed == 1
    assert result.report.untargeted_removed == 2
    assert result.report.nonlatin_removed == 0
    assert result.report.retained == 2


def test_encode_urls_first_seen_order():
    f = EntryFactory()
    entries = [
        f.nb(0, 1, "http://b.test/x?q=1"),
        f.nb(1, 1, "http://a.test"),
        f.nb(2, 1, "http://b.test/x?q=2"),
        f.close(3, 1),
    ]

    recoded, urls, params = encode_urls(entries)

    assert [(u.url_id, u.base_url, u.scheme, u.host) for u in urls] == [
        (0, "http://b.test/x", "http", "b.test"),
        (1, "http://a.test", "http", "a.test"),
    ]
    assert [(p.url_id, p.raw_params) for p in params] == [(0, "q=1"), (0, "q=2")]
    assert [e.url_id for e in recoded] == [0, 1, 0, None]
    assert recoded[0].url == "http://b.test/x?q=1"


def test_empty_input():
    result = run_cleaning([])

    assert result.report == CleaningReport()
    assert result.report.physical_cleaning_ratio == 0.0
    assert result.entries == []


def test_report_addition():
    a = CleaningReport(10, 1, 2, 0, 3, 1)
    b = CleaningReport(5, 0, 1, 1, 0, 0)

    assert a + b == CleaningReport(15, 1, 3, 1, 3, 1)


def test_save_and_load(tmp_path, excerpt_store, excerpt_result):
    save_cleaning(excerpt_result, excerpt_store.users, str(tmp_path))

    loaded, users = load_cleaning(str(tmp_path))

    assert users == excerpt_store.users
    assert loaded.report == excerpt_result.report
    assert loaded.file_reports == excerpt_result.file_reports
    assert loaded.urls == excerpt_result.urls
    assert loaded.params == excerpt_result.params
    assert loaded.entries == excerpt_result.entries


def _assert_fixed_point(result):
    again = run_cleaning(result.entries)

    assert again.report.removed == 0
    assert again.entries == result.entries
    assert again.urls == result.urls


def test_cleaning_twice_excerpt(excerpt_result):
    _assert_fixed_point(excerpt_result)


@pytest.mark.parametrize("seed", [0, 4, 9, 23])
def test_cleaning_twice_generated(tmp_path, seed):
    directory = str(tmp_path)
    truth = generate_synthetic(GeneratorConfig(users=3, files=2), seed, directory)
    store = merge_logs([read_log_file(os.path.join(directory, f)) for f in sorted(truth.files)])

    _assert_fixed_point(run_cleaning(store))
