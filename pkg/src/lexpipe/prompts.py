"""Prompt templates. Placeholders are ``{name}`` with a bare identifier."""

QA_GENERATION = """\
A conversation between User and Assistant. The user asks a question, and the Assistant solves it.
I am fine-tuning a large legal model and need to generate some question-answer pairs (QA) based on legal text as data enhancement.
The following is a piece of legal text:{prompt}
Please generate {num_qa} high-quality question-answer pairs (QA) based on this text. Both the questions and answers are required to be based on the text content, and the questions should cover the key legal concepts, clauses, or principles in the text.
The sample format is as follows:
{
  "input": "What is Article 96 of the Civil Code?",
  "output": "The legal persons of institutions......"
}
Please ensure that the generated QA pairs meet the following requirements:
1. The questions are clear, and the answers are accurate and directly derived from the text.
2. Question types may include definitions, interpretation of terms, scope of application, legal liability, etc.
3. The answer should be as concise as possible and avoid redundant information.
Please return the QA pair in the following format:
[ { "input": "Question 1", "output": "Answer 1" }, ... ]"""

ELEMENT_AUGMENTATION = """\
请为以下法律要素给出详细解释，格式为“要素名称（解释）”，只输出一行。
法律要素：{element}"""

ELEMENT_EXTRACTION = """\
请从输入文本中抽取下列法律要素，刑期类要素统一以月为单位，只输出JSON对象。
要素列表：{elements}
输入文本：{document}"""

TEMPLATES = {
    "qa_generation": QA_GENERATION,
    "element_augmentation": ELEMENT_AUGMENTATION,
    "element_extraction": ELEMENT_EXTRACTION,
}
