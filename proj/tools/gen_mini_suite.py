#!/usr/bin/env python3
# Regenerates data/mini_suite.tsv: English sentences per category plus
# deterministic pseudo-word stand-ins for lug, ach and teo. Run from the repo root.
import hashlib
S = {
1: ["I would like to open a savings account.", "How much does it cost to send money to my sister?", "Please show me your national identity card.", "The bank closes at four o'clock on Saturday.", "Your loan has been approved for one year."],
2: ["Wash your hands with soap before eating.", "A triangle has three sides.", "Read the first chapter before the next lesson.", "Water boils when it is heated enough.", "Write your name at the top of the page."],
3: ["Good morning, how did you sleep?", "I am well, thank you for asking.", "How are the children at home?", "We have not seen each other for a long time.", "Greet your mother for me."],
4: ["Long ago a hare lived near the river.", "The hare wanted to cross the water without getting wet.", "A tortoise offered to carry him on its back.", "Halfway across, the tortoise began to sink.", "From that day the hare never laughed at the tortoise again."],
5: ["Where does it hurt, and for how long?", "I have had a fever since yesterday evening.", "Take two tablets every morning after food.", "We need to test your blood for malaria.", "Come back to the clinic if the pain returns."],
6: ["Heavy rain destroyed several houses in the district.", "The new road will connect the two towns by next year.", "Police arrested three men at the market.", "Schools will reopen on the first Monday of February.", "The price of sugar rose again this week."],
7: ["The lake is the largest in the region.", "The city was founded more than a hundred years ago.", "Coffee is one of the main exports of the country.", "The mountain is covered with snow all year.", "Most people in the area speak two languages."],
8: ["How much are these tomatoes?", "Give me two kilograms of rice, please.", "Do you have change for this note?", "The shop sells shoes and clothes for children.", "I will pay you the rest tomorrow."],
9: ["There is a fire in the house next door.", "Call an ambulance immediately.", "Move everyone away from the flooded road.", "Do not touch the fallen electric wire.", "Keep pressing on the wound to stop the bleeding."],
10: ["Check the oil level before starting the engine.", "Mix one bag of cement with three wheelbarrows of sand.", "Tighten the bolts on the wheel in a cross pattern.", "Let the wall dry for two days before painting.", "Replace the brake pads when they become thin."],
11: ["Pregnant women should visit the clinic at least four times.", "Sleep under a treated mosquito net every night.", "Give the baby only breast milk for six months.", "Boil drinking water to kill germs.", "Vaccinate your child against measles."],
12: ["The water supply will be interrupted on Tuesday.", "All residents must register before the end of the month.", "The office will be closed for the public holiday.", "Vehicles are not allowed on this street after six.", "The meeting has been moved to the town hall."],
13: ["Today we celebrate the hard work of our farmers.", "The government will build a new health centre here.", "I thank the elders for welcoming us.", "Together we can end poverty in our community.", "Let us protect our forests for the next generation."],
14: ["Plant the maize at the start of the rains.", "Space the beans thirty centimetres apart.", "Remove weeds before they produce seeds.", "Store the harvest in a dry place.", "Rotate crops to keep the soil healthy."],
15: ["I agree that the road needs repair.", "I am not sure who I will vote for.", "The cost of school fees is my biggest worry.", "I think the market should open earlier.", "Most of my neighbours support the new law."],
16: ["Which bus goes to the main hospital?", "The taxi leaves when it is full.", "How much is the fare to the city centre?", "Please stop at the next junction.", "The train was late because of the rain."],
17: ["My grandmother lives in the village.", "We eat together every Sunday.", "My brother is getting married next month.", "The children help their father in the garden.", "Our family has grown very large."],
18: ["Eat fruit and vegetables every day.", "Beans are a good source of protein.", "Too much salt is bad for the heart.", "Children need milk to grow strong.", "Drink plenty of clean water."],
19: ["Keep some of the harvest for the dry season.", "Plant crops that can survive drought.", "Dry the cassava in the sun before storing it.", "Raise chickens to have eggs all year.", "Share seeds with your neighbours after a bad season."],
20: ["When will the council fix the broken pipe?", "Please submit your complaint in writing.", "The council collects rubbish every Thursday.", "We need a new bridge over the stream.", "The chairperson will answer questions after the meeting."],
}
LANGS = ["lug", "ach", "teo"]
CONS = {"lug": "bkmnsgl", "ach": "pkdtlwg", "teo": "kmrtpsl"}
VOW = "aeiou"
def word(lang, w):
    core = w.strip(".,?!'").lower()
    if not core: return w
    h = hashlib.sha256((lang + ":" + core).encode()).digest()
    n = 2 + h[0] % 3
    out = "".join(CONS[lang][h[1 + 2*i] % len(CONS[lang])] + VOW[h[2 + 2*i] % 5] for i in range(n))
    if w[0].isupper(): out = out.capitalize()
    tail = w[len(w.rstrip(".,?!")):]
    return out + tail
with open("data/mini_suite.tsv", "w") as f:
    f.write("\t".join(["category_id", "sent_index", "english"] + LANGS) + "\n")
    for c, sents in S.items():
        assert len(sents) == 5 and len(set(sents)) == 5
        for i, s in enumerate(sents):
            f.write("\t".join([str(c), str(i), s] + [" ".join(word(l, w) for w in s.split()) for l in LANGS]) + "\n")
