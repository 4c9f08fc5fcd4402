#pragma once

#include <string_view>

#include "clinstructor/util.hpp"

// Prompt templates and response schemas for the two LLM stages. The mock
// backend parses prompts built from these, so the markers are shared.
namespace clinstructor::prompts {

inline constexpr std::string_view kIdentifySystem =
    "You are an expert feature engineer with specialization in clinical and medical domains. "
    "You are helping to design features for a mortality prediction model.";

// {patient_notes} is substituted with the note text.
inline constexpr std::string_view kIdentifyInstruction =
    "Instruction:\n"
    "\n"
    "Your task is to define useful features for predicting in-hospital mortality from ICU "
    "admission notes.\n"
    "\n"
    "Do the following:\n"
    "\n"
    "1. Write 20 generalizable and clinically meaningful questions that could be answered from "
    "admission notes. Answer to these questions should be good predictors of mortality.\n"
    "2. Assign a short feature name (keyword) to each question.\n"
    "3. Rate each feature’s importance from 0 (not useful) to 1 (highly predictive).\n"
    "\n"
    "Guidelines:\n"
    "\n"
    "1.  Avoid yes/no questions. Use open-form questions (e.g., prefer “What is the "
    "patient’s age?” over “Is the patient older than 65?”).\n"
    "\n"
    "Provide your answer in the given JSON output format. \n"
    "\n"
    "Example of one question_info\n"
    "  \"question\": \"What is the patient’s age?\",\n"
    "  \"keyword\": \"patient_age\",\n"
    "  \"importance\": 0.8\n"
    "\n"
    "\n"
    "Patient Admission Notes: \n"
    "{patient_notes}\n";

inline constexpr std::string_view kNotesSlot = "{patient_notes}";
inline constexpr std::string_view kIdentifyNotesMarker = "Patient Admission Notes: \n";
inline constexpr std::string_view kIdentifySchemaName = "questions_generation";

json identify_schema();

inline constexpr std::string_view kExtractSystem =
    "You are an expert in the clinical and medical domain, with expertise in analyzing and "
    "answering any questions based on clinical notes.";

inline constexpr std::string_view kExtractInstruction =
    "Answer each of the numbered questions below using only the information contained in the "
    "admission note that follows. Do not rely on outside knowledge or assumptions. If the note "
    "does not contain the information needed to answer a question, or the question is not "
    "applicable, answer exactly \"N/A\". Return a JSON object whose keys are the question "
    "numbers (Q1, Q2, ...) and whose values are the answers as strings.\n";

inline constexpr std::string_view kQuestionsMarker = "\nQuestions:\n";
inline constexpr std::string_view kNoteMarker = "\nAdmission Note:\n";

// "answer_{k}" with required string keys Q1..Qk and no others.
json extract_schema(std::size_t k);
std::string extract_schema_name(std::size_t k);
std::string extract_schema_description(std::size_t k);

}  // namespace clinstructor::prompts
