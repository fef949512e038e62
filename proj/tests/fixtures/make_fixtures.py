#!/usr/bin/env python3
"""Regenerates the checked-in fixture corpora and oracle files.

The outputs are committed; rerunning this script must reproduce them byte for
byte. Nothing here imports or shells out to the C++ code: every expected value
is computed from the fixture text with plain Python.

    python3 tests/fixtures/make_fixtures.py
"""

import json
import math
import random
from pathlib import Path

HERE = Path(__file__).resolve().parent

# Fixture chunking: 96-word windows advancing by 80 words.
CHUNK_SIZE = 96
CHUNK_OVERLAP = 16
TARGET_CHUNKS = 40

# ---------------------------------------------------------------------------
# Semiconductor earnings reports (training corpus)
# ---------------------------------------------------------------------------

COMPANIES = {
    "NVDA": {
        "name": "NVIDIA Corporation",
        "short": "NVIDIA",
        "period_label": "third quarter of fiscal 2024",
        "quarter_end": "October 29, 2023",
        "fiscal_year_end": "January 28, 2024",
        "revenue": "$18.12 billion",
        "revenue_growth": "up 206 percent from a year ago",
        "segments": [
            ("Data Center", "$14.51 billion", "up 279 percent from a year ago"),
            ("Gaming", "$2.86 billion", "up 81 percent from a year ago"),
            ("Professional Visualization", "$416 million", "up 108 percent from a year ago"),
            ("Automotive", "$261 million", "up 4 percent from a year ago"),
        ],
        "gross_margin": "74.0 percent",
        "opex": "$2.98 billion",
        "net_income": "$9.24 billion",
        "eps": "$3.71",
        "cash_flow": "$7.33 billion",
        "returned": "$3.81 billion",
        "dividend": "$0.04 per share",
        "outlook": "$20.00 billion, plus or minus 2 percent",
        "products": ["H100 Tensor Core GPU", "GH200 Grace Hopper Superchip", "GeForce RTX 40 Series",
                     "Spectrum-X Ethernet platform", "DRIVE Orin platform", "Omniverse Cloud"],
        "ceo": "Jensen Huang",
        "cfo": "Colette Kress",
        "seed": 2023_11_21,
    },
    "AMD": {
        "name": "Advanced Micro Devices, Inc.",
        "short": "AMD",
        "period_label": "third quarter of 2023",
        "quarter_end": "September 30, 2023",
        "fiscal_year_end": "December 30, 2023",
        "revenue": "$5.8 billion",
        "revenue_growth": "up 4 percent from a year ago",
        "segments": [
            ("Data Center", "$1.6 billion", "flat from a year ago"),
            ("Client", "$1.5 billion", "up 42 percent from a year ago"),
            ("Gaming", "$1.5 billion", "down 8 percent from a year ago"),
            ("Embedded", "$1.2 billion", "down 5 percent from a year ago"),
        ],
        "gross_margin": "47 percent",
        "opex": "$2.5 billion",
        "net_income": "$299 million",
        "eps": "$0.18",
        "cash_flow": "$421 million",
        "returned": "$511 million",
        "dividend": None,
        "outlook": "approximately $6.1 billion, plus or minus $300 million",
        "products": ["Instinct MI300X accelerator", "4th Gen EPYC processor", "Ryzen 7040 Series processor",
                     "Radeon RX 7800 XT graphics card", "Versal adaptive SoC", "ROCm software stack"],
        "ceo": "Lisa Su",
        "cfo": "Jean Hu",
        "seed": 2023_10_31,
    },
}

REGIONS = ["the United States", "Taiwan", "China", "Europe", "Japan", "Singapore", "Korea"]
CUSTOMERS = ["cloud service providers", "consumer internet companies", "enterprise customers",
             "original equipment manufacturers", "automotive partners", "system builders"]
TRENDS = ["strengthened", "remained healthy", "improved sequentially", "moderated", "accelerated"]
DRIVERS = ["inventory normalization", "new product ramps", "higher average selling prices",
           "expanded supply", "seasonal demand", "platform transitions"]


def fact_sentences(c):
    s = [
        f"{c['name']} today reported revenue for the {c['period_label']} ended {c['quarter_end']} of {c['revenue']}, {c['revenue_growth']}.",
        f"The fiscal year of {c['name']} ends on {c['fiscal_year_end']}.",
        f"GAAP gross margin for the quarter was {c['gross_margin']}.",
        f"GAAP operating expenses were {c['opex']} for the quarter.",
        f"GAAP net income for the quarter was {c['net_income']}.",
        f"GAAP earnings per diluted share were {c['eps']}.",
        f"Cash flow from operating activities was {c['cash_flow']} in the quarter.",
        f"During the quarter the company returned {c['returned']} to shareholders through share repurchases and related activity.",
        f"For the next quarter, revenue is expected to be {c['outlook']}.",
        f"{c['ceo']}, chief executive officer, said that demand for the company's platforms remained broad across markets.",
        f"{c['cfo']}, chief financial officer, said that the company continues to invest in research and development while managing operating costs.",
    ]
    if c["dividend"]:
        s.append(f"The company will pay its next quarterly cash dividend of {c['dividend']} to shareholders of record.")
    for name, rev, growth in c["segments"]:
        s.append(f"{name} segment revenue was {rev}, {growth}.")
    return s


def filler_sentence(rng, c):
    t = rng.randrange(6)
    prod = rng.choice(c["products"])
    if t == 0:
        return (f"In {rng.choice(REGIONS)}, demand from {rng.choice(CUSTOMERS)} {rng.choice(TRENDS)} "
                f"as {rng.choice(DRIVERS)} supported shipments of the {prod}.")
    if t == 1:
        return (f"The company expanded availability of the {prod} with {rng.choice(CUSTOMERS)} "
                f"and reported that {rng.choice(DRIVERS)} contributed to segment results.")
    if t == 2:
        return (f"Management noted that {rng.choice(DRIVERS)} and {rng.choice(DRIVERS)} "
                f"shaped the results of the {c['period_label']}.")
    if t == 3:
        return (f"Engineering teams advanced the roadmap for the {prod}, and early feedback from "
                f"{rng.choice(CUSTOMERS)} in {rng.choice(REGIONS)} was positive.")
    if t == 4:
        return (f"Sales to {rng.choice(CUSTOMERS)} {rng.choice(TRENDS)} compared with the prior quarter, "
                f"led by the {prod}.")
    return (f"The company continued to manage supply commitments with manufacturing partners in "
            f"{rng.choice(REGIONS)} to support the {prod}.")


def words(text):
    return text.split()


def expected_chunks(n_words, size=CHUNK_SIZE, overlap=CHUNK_OVERLAP):
    # Windows start every (size - overlap) words until one reaches the end.
    if n_words <= size:
        return 1
    return 1 + math.ceil((n_words - size) / (size - overlap))


def earnings_report(ticker):
    c = COMPANIES[ticker]
    rng = random.Random(c["seed"])
    lo = CHUNK_SIZE + (TARGET_CHUNKS - 2) * (CHUNK_SIZE - CHUNK_OVERLAP) + 1
    hi = CHUNK_SIZE + (TARGET_CHUNKS - 1) * (CHUNK_SIZE - CHUNK_OVERLAP)
    target = (lo + hi) // 2

    facts = fact_sentences(c)
    paragraphs = [[f"{c['name']} Reports Results for the {c['period_label'].capitalize()}"]]
    total = len(words(paragraphs[0][0]))
    fi = 0
    current = []
    while total < target:
        if fi < len(facts) and (len(current) == 0 or rng.random() < 0.35):
            s = facts[fi]
            fi += 1
        else:
            s = filler_sentence(rng, c)
        current.append(s)
        total += len(words(s))
        if len(current) >= rng.randrange(3, 7):
            paragraphs.append(current)
            current = []
    if current:
        paragraphs.append(current)
    text = "\n\n".join(" ".join(p) for p in paragraphs) + "\n"
    n = len(words(text))
    assert lo <= n <= hi, (ticker, n)
    assert fi == len(facts), f"{ticker}: only {fi} of {len(facts)} facts placed"
    return text


# ---------------------------------------------------------------------------
# Broadcom evaluation corpus (service fixtures)
# ---------------------------------------------------------------------------

AVGO_DIVIDEND_SENTENCES = [
    "Broadcom's Board of Directors declared a quarterly cash dividend of $4.60 per share of common stock, payable on September 29, 2023 to stockholders of record at the close of business on September 21, 2023.",
    "We paid stockholders $1.9 billion of cash dividends, a quarterly dividend of $4.60 per share.",
]

AVGO_PRESS_RELEASE = """Broadcom Inc. Announces Third Quarter Fiscal Year 2023 Financial Results

Broadcom Inc. (NASDAQ: AVGO), a global technology leader that designs, develops and supplies semiconductor and infrastructure software solutions, today reported financial results for its third quarter of fiscal year 2023 ended July 30, 2023, and provided guidance for its fourth quarter of fiscal year 2023.

Third quarter revenue was $8,876 million, an increase of 5 percent from the prior year period. GAAP net income was $3,303 million. Adjusted EBITDA was $5,815 million, or 66 percent of revenue.

"Broadcom delivered third quarter revenue of $8.88 billion, driven by continued strength in infrastructure software and growth in networking," said Hock Tan, President and CEO of Broadcom Inc. "Looking ahead, we expect growth in generative AI deployments at hyperscale customers to offset softness in broadband and server storage."

"Consolidated revenue grew 5 percent year over year and free cash flow was $4.6 billion, or 52 percent of revenue," said Kirsten Spears, CFO of Broadcom Inc. "{DIV0}"

Fourth quarter fiscal year 2023 guidance: revenue of approximately $9.27 billion and Adjusted EBITDA of approximately 65 percent of projected revenue.

{DIV1}
"""

AVGO_EARNINGS_REPORT = """Broadcom Inc. Third Quarter Fiscal Year 2023 Earnings Report

Semiconductor solutions revenue was $6,942 million, or 78 percent of total revenue, up 5 percent from a year ago. Networking revenue was $2.95 billion, up 20 percent from a year ago, driven by custom accelerators and Ethernet switching for AI clusters. Server storage connectivity revenue declined 6 percent from a year ago as enterprise spending softened.

Infrastructure software revenue was $1,934 million, or 22 percent of total revenue, up 5 percent from a year ago, supported by renewals of core software franchises and mainframe products.

Gross margin on a GAAP basis was 69 percent of revenue. Operating expenses were $1,192 million, of which research and development was $1,186 million. GAAP diluted earnings per share were $7.78 and non-GAAP diluted earnings per share were $10.54.

Cash from operations was $4,681 million and capital expenditures were $102 million, resulting in free cash flow of $4,579 million. {DIV1} The company also repurchased 3.4 million shares of common stock for $2.8 billion during the period.

At the end of the quarter, cash and cash equivalents were $12.1 billion and gross principal debt was $39.3 billion. The pending acquisition of VMware remains on track to close in the company's fiscal year 2023.
"""

AVGO_TRANSCRIPT = """Broadcom Inc. Third Quarter Fiscal Year 2023 Earnings Call Transcript

Operator. Welcome to the Broadcom third quarter fiscal year 2023 financial results conference call.

Hock Tan, President and CEO. Thank you, everyone, for joining us today. Consolidated net revenue was $8.9 billion, up 5 percent year on year and in line with guidance. Semiconductor solutions revenue grew 5 percent year on year, and generative AI revenue exceeded 15 percent of semiconductor revenue. Infrastructure software revenue was $1.9 billion, up 5 percent year on year. We expect consolidated revenue of about $9.27 billion next quarter.

Kirsten Spears, CFO. Gross margin was 74.7 percent of revenue on a non-GAAP basis. Operating income from continuing operations was $5.5 billion on a non-GAAP basis. Free cash flow was $4.6 billion, representing 52 percent of revenue. {DIV1} We ended the quarter with $12.1 billion of cash.

Analyst. Could you discuss the trajectory of networking demand from hyperscale customers?

Hock Tan, President and CEO. Networking demand is driven by deployments of custom AI accelerators and Ethernet fabrics, and we expect that strength to continue into the fourth quarter, while broadband and server storage remain soft.
"""


def render_avgo(template, with_dividend):
    if with_dividend:
        return template.replace("{DIV0}", AVGO_DIVIDEND_SENTENCES[0]).replace("{DIV1}", AVGO_DIVIDEND_SENTENCES[1])
    text = template.replace(' "{DIV0}"', '').replace(" {DIV0}", "").replace("{DIV0}", "")
    text = text.replace(" {DIV1}", "").replace("\n{DIV1}\n", "\n").replace("{DIV1}", "")
    return text


# ---------------------------------------------------------------------------
# QA sample, golden record, model comparison records
# ---------------------------------------------------------------------------

QA_CONTEXT = (
    "NVIDIA Corporation reports its results on a fiscal year basis. "
    "The fiscal year of NVIDIA Corporation ends on January 28, 2024, and the third quarter of fiscal 2024 ended on October 29, 2023."
)
QA_QUERY = "What is the fiscal year-end date for NVIDIA Corporation?"
QA_ANSWER = "The fiscal year end date for NVIDIA Corporation is January 28."
QA_STRIPPED_ANSWER = "Twelve months later."

# Training template, copied from the published format.
TEMPLATE = (
    "We have provided context information below.\n"
    "---------------------\n"
    "{context}\n"
    "---------------------\n"
    "Given this information, please answer the question: \n"
    "{query}\n"
    "Answer: {answer}"
)

COMPARISON = {
    # model -> (correctness scores, semantic distances); means are the printed cells.
    "Financially-augmented LLM": ([5, 4, 6, 3, 5, 4, 6, 4, 5, 4],
                                  [0.1201, 0.1532, 0.1388, 0.1650, 0.1297, 0.1475, 0.1346, 0.1562, 0.1419, 0.1557]),
    "Llama-2-7b": ([3, 2, 4, 2, 3, 3, 2, 3, 4, 2],
                   [0.1804, 0.2011, 0.1876, 0.1953, 0.1790, 0.2047, 0.1899, 0.1925, 0.1832, 0.1989]),
    "GPT-3.5": ([6, 5, 5, 6, 4, 6, 5, 5, 6, 5],
                [0.0987, 0.1102, 0.1054, 0.1123, 0.0999, 0.1088, 0.1041, 0.1096, 0.1075, 0.1094]),
}
COMPARISON_PRINTED = {
    "Financially-augmented LLM": ("4.6", "0.14427"),
    "Llama-2-7b": ("2.8", "0.19126"),
    "GPT-3.5": ("5.3", "0.10659"),
}


RAW_PRESS_RELEASE = (
    "Broadcom Inc. Announces Quarterly Dividend   \r\n"
    "\r\n"
    "Broadcom Inc. (NASDAQ: AVGO) today announced that its Board of Directors declared a\t\r\n"
    "quarterly cash dividend of $4.60 per share of common stock.  \r\n"
    "\r\n\r\n\r\n\r\n"
    "The dividend is payable on September 29, 2023 to stockholders of record at the close\r\n"
    "of business on September 21, 2023.\t \r\n"
    "\r\n\r\n\r\n"
)


def reference_normalize(raw):
    """Line-oriented reference for the ingest normalization rule."""
    lines = raw.replace("\r\n", "\n").split("\n")
    lines = [ln.rstrip(" \t\r\v\f") for ln in lines]
    out, blanks = [], 0
    for ln in lines:
        blanks = blanks + 1 if ln == "" else 0
        if blanks <= 2:
            out.append(ln)
    return "\n".join(out)


def write_bytes(path, data):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(data)


def write(path, text):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(text)


def main():
    oracle = {"chunk_size": CHUNK_SIZE, "chunk_overlap": CHUNK_OVERLAP, "documents": {}}

    semis = HERE / "semis"
    sources = []
    for ticker in ("NVDA", "AMD"):
        text = earnings_report(ticker)
        name = f"{ticker.lower()}_2023q3_earnings_report.txt"
        write(semis / name, text)
        sources.append({"path": name, "company": ticker, "fiscal_period": "2023Q3",
                        "doc_type": "earnings_report"})
        n = len(words(text))
        oracle["documents"][name] = {"words": n, "chunks": expected_chunks(n)}
    write(semis / "sources.json", json.dumps(sources, indent=2) + "\n")
    oracle["total_chunks"] = sum(d["chunks"] for d in oracle["documents"].values())
    oracle["samples_at_n10"] = oracle["total_chunks"] * 10
    write(semis / "oracle.json", json.dumps(oracle, indent=2) + "\n")

    for variant, with_div in (("broadcom", True), ("broadcom_nodividend", False)):
        d = HERE / variant
        docs = [("avgo_2023q3_press_release.txt", AVGO_PRESS_RELEASE, "press_release"),
                ("avgo_2023q3_earnings_report.txt", AVGO_EARNINGS_REPORT, "earnings_report"),
                ("avgo_2023q3_earnings_call_transcript.txt", AVGO_TRANSCRIPT, "earnings_call_transcript")]
        srcs = []
        for name, tmpl, kind in docs:
            text = render_avgo(tmpl, with_div)
            assert "{DIV" not in text
            assert ("4.60" in text) == with_div, name
            write(d / name, text)
            srcs.append({"path": name, "company": "AVGO", "fiscal_period": "2023Q3", "doc_type": kind})
        write(d / "sources.json", json.dumps(srcs, indent=2) + "\n")

    sample = {
        "sample_id": "s_qa_fixture",
        "context": QA_CONTEXT,
        "query": QA_QUERY,
        "answer": QA_ANSWER,
        "seed_type": None,
        "provenance": {"chunk_ids": ["c_qa_fixture"], "doc_ids": ["NVDA-2023Q3-earnings_report-fixture"],
                       "teacher_model_id": "gpt-3.5-turbo", "job_id": "fixture", "question_index": 0},
        "created_at": "1970-01-01T00:00:00Z",
    }
    write(HERE / "qa_sample.json", json.dumps(sample, indent=2) + "\n")
    stripped = dict(sample, sample_id="s_qa_stripped", answer=QA_STRIPPED_ANSWER)
    write(HERE / "qa_sample_stripped.json", json.dumps(stripped, indent=2) + "\n")
    write(HERE / "golden_record.txt",
          TEMPLATE.format(context=QA_CONTEXT, query=QA_QUERY, answer=QA_ANSWER))

    raw = RAW_PRESS_RELEASE.encode("utf-8")
    normalized = reference_normalize(RAW_PRESS_RELEASE).encode("utf-8")
    write_bytes(HERE / "normalize" / "press_release_raw.txt", raw)
    write_bytes(HERE / "normalize" / "press_release_normalized.txt", normalized)
    write(HERE / "normalize" / "oracle.json",
          json.dumps({"raw_bytes": len(raw), "normalized_bytes": len(normalized)}, indent=2) + "\n")

    lines = []
    for model, (scores, dists) in COMPARISON.items():
        mean_c = sum(scores) / len(scores)
        mean_d = sum(dists) / len(dists)
        assert f"{mean_c:.1f}" == COMPARISON_PRINTED[model][0], (model, mean_c)
        assert f"{mean_d:.5f}" == COMPARISON_PRINTED[model][1], (model, mean_d)
        for i, (s, dist) in enumerate(zip(scores, dists), start=1):
            lines.append(json.dumps({"case_id": f"avgo-{i:02d}", "model_name": model, "correctness": s,
                                     "semantic_distance": dist, "judge_raw": f"Score: {s}"}))
    write(HERE / "model_comparison" / "records.jsonl", "\n".join(lines) + "\n")
    write(HERE / "model_comparison" / "expected.json",
          json.dumps({m: {"correctness": c, "semantic_distance": d} for m, (c, d) in COMPARISON_PRINTED.items()},
                     indent=2) + "\n")


if __name__ == "__main__":
    main()
