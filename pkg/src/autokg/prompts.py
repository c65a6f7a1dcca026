"""Prompt templates for the three LLM tasks: keyword extraction,
keyword refinement, and query answering.

Template text is fixed; only the bracketed slots vary per call. Block
text is sanitized so the triple-backtick delimiters cannot be broken
from inside, and the avoid-list always renders inside angle brackets.
"""

from __future__ import annotations

from .corpus import count_tokens

BLOCK_SEPARATOR = "*"
AVOID_OPEN = "⟨"   # mathematical left angle bracket
AVOID_CLOSE = "⟩"
EMPTY_KEYWORD_SLOT = "(none)"

KEYWORD_EXTRACTION_TEMPLATE = (
    "You are an advanced AI assistant, specializing in analyzing various pieces of "
    "information and providing precise summaries. Your task is to determine the core "
    "theme in the following series of *-separated information fragments, which are "
    "delimited by triple backticks. Ensure your answer focuses on the topic and avoids "
    "including unrelated content. DO NOT write complete sentences.\n"
    "You should obey the following rules when doing this task:\n"
    "1, Keywords in your answer should related to the topic '{main_topic}';\n"
    "2, Your answer should include at most {l1} keywords;\n"
    "3, Each keyword should be at most {l2} words long;\n"
    "4, avoid already appeared theme keywords, marked inside " + AVOID_OPEN + AVOID_CLOSE + ";\n"
    "5, Write your answer in '{language}';\n"
    "6, Separate your output keywords with commas (,);\n"
    "7, Don't include any symbols other than keywords.\n"
    "\n"
    "Information:```{information}```\n"
    "\n"
    "Please avoid the following already appeared theme terms:\n"
    + AVOID_OPEN + "{previous}" + AVOID_CLOSE + "\n"
    "Your response: "
)

KEYWORD_REFINEMENT_TEMPLATE = (
    "You are an advanced AI assistant, specializing in organizing keyword lists. Your "
    "task is to filter and refine the comma-separated keywords delimited by triple "
    "backticks: concentrate keywords that share one theme into a single keyword, remove "
    "duplicates, split keywords that combine several themes, and delete keywords "
    "unrelated to the topic '{main_topic}'.\n"
    "You should obey the following rules when doing this task:\n"
    "1, Each keyword in your answer should be at most {l2} words long;\n"
    "2, Write your answer in '{language}';\n"
    "3, Separate your output keywords with commas (,);\n"
    "4, Don't include any symbols other than keywords.\n"
    "\n"
    "Keywords:```{keywords}```\n"
    "Your response: "
)

QUERY_RESPONSE_TEMPLATE = (
    "I want you to do a task, deal with a query, or answer a question with some "
    "information from a knowledge graph. You will be given a set of keywords directly "
    "related to a query, as well as adjacent keywords from the knowledge graph. "
    "Relevant texts will be provided, enclosed within triple backticks. These texts "
    "contain information pertinent to the query and keywords.\n"
    "Please note, you should not invent any information. Stick to the facts provided "
    "in the keywords and texts. These additional data are meant to assist you in "
    "accurately completing the task. Your response should be written in '{language}'.\n"
    "Avoid showing any personal information, like Name, Email, WhatsApp, Skype, and "
    "Website in your polished response.\n"
    "\n"
    "Keywords information (directly related to the query or find via the adjacent "
    "search of the knowledge graph): {keywords}\n"
    "\n"
    "Text information: ```{information}```\n"
    "\n"
    "Your task: {query}\n"
    "Your response:"
)


def sanitize_fragment(text: str) -> str:
    """Replace backticks so fragment text cannot escape the ``` delimiters."""
    return text.replace("`", "'")


def join_fragments(texts: list[str]) -> str:
    return BLOCK_SEPARATOR.join(sanitize_fragment(t) for t in texts)


def render_task1(main_topic: str, l1: int, l2: int, language: str,
                 block_texts: list[str], previous_keywords: list[str]) -> str:
    return KEYWORD_EXTRACTION_TEMPLATE.format(
        main_topic=main_topic,
        l1=l1,
        l2=l2,
        language=language,
        information=join_fragments(block_texts),
        previous=", ".join(previous_keywords),
    )


def render_task2(main_topic: str, l2: int, language: str, keywords: list[str]) -> str:
    return KEYWORD_REFINEMENT_TEMPLATE.format(
        main_topic=main_topic,
        l2=l2,
        language=language,
        keywords=sanitize_fragment(", ".join(keywords)),
    )


def render_task3(language: str, keywords: list[str], block_texts: list[str], query: str) -> str:
    keyword_slot = ", ".join(keywords) if keywords else EMPTY_KEYWORD_SLOT
    return QUERY_RESPONSE_TEMPLATE.format(
        language=language,
        keywords=keyword_slot,
        information=join_fragments(block_texts),
        query=sanitize_fragment(query),
    )


def fixed_template_tokens(task_id: int, main_topic: str, l1: int, l2: int,
                          language: str, tokenizer_id: str = "whitespace") -> int:
    """Token count of a task template with every variable slot left empty.

    Used to separate fixed template text from variable content when
    auditing per-build token usage against the budget formula.
    """
    if task_id == 1:
        rendered = render_task1(main_topic, l1, l2, language, [], [])
    elif task_id == 2:
        rendered = render_task2(main_topic, l2, language, [])
    elif task_id == 3:
        rendered = render_task3(language, [], [], "")
    else:
        raise ValueError(f"unknown task id {task_id}")
    return count_tokens(rendered, tokenizer_id)
